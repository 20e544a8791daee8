//! `srpt-ht`: simulate SRPT queues, run invariant checks and heavy-traffic
//! sweeps, and tabulate reference quantities.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use srpt_ht::distributions::{DistributionSpec, Law};
use srpt_ht::engine::{generate_primitives, interarrival_with_rate, simulate_coupled, InterarrivalKind, PrimitiveStream, SimConfig};
use srpt_ht::harness::{fclt_check, run_ensemble, ExperimentConfig, InitialRegime};
use srpt_ht::reference::{biased_walk_hit, biased_walk_mc, rbm_endpoints, LimitParams, Summary, W0Law};
use srpt_ht::scaling::{make_params, tilde_processes, DEFAULT_A_GRID};
use srpt_ht::seed::{stream, stream_rng};
use srpt_ht::verify::{all_hard_pass, run_all, VerifyOptions};
use srpt_ht::Error;

const SIMULATE_EXAMPLE: &str = include_str!("../../../configs/simulate.json");
const HAND_TRACE_EXAMPLE: &str = include_str!("../../../configs/hand_trace.json");
const SWEEP_EXAMPLE: &str = include_str!("../../../configs/heavy_traffic.json");
const RBM_EXAMPLE: &str = include_str!("../../../configs/rbm.json");

#[derive(Parser)]
#[command(name = "srpt-ht", version, about = "SRPT queue simulation and heavy-traffic checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write raw and scaled outputs.
    Simulate(Common),
    /// Run every named invariant check and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Replications per r for the harness trend checks.
        #[arg(long, default_value_t = 500)]
        reps: usize,
    },
    /// Run a coupled ensemble over a sequence of r and write the report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also estimate the variances of the centered work and arrival processes.
        #[arg(long)]
        fclt: bool,
    },
    /// Sample reflected Brownian motion endpoints.
    Rbm(Common),
    /// Hitting probability of the biased walk, exact and Monte Carlo.
    Walk {
        #[arg(long)]
        j: u32,
        #[arg(long)]
        l: u32,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Tabulate S, S⁻¹ and tail ratios of a law.
    Dist {
        /// Law shorthand, e.g. `exponential:1` or `weibull:1,2`.
        #[arg(long)]
        law: DistributionSpec,
        /// Values of r for c_r = S⁻¹(r).
        #[arg(long, num_args = 1.., default_values_t = [10.0])]
        r: Vec<f64>,
        /// Points x for the S and tail-ratio table.
        #[arg(long, num_args = 1.., default_values_t = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0])]
        x: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print an example config and exit.
    #[arg(long)]
    example: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn default_t() -> f64 {
    1.0
}
fn default_a_grid() -> Vec<f64> {
    DEFAULT_A_GRID.to_vec()
}
fn default_snapshots() -> usize {
    200
}
fn default_interarrival() -> InterarrivalKind {
    InterarrivalKind::Exponential
}

/// `simulate` config: explicit primitives, or a generated system `r`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum SimulateConfig {
    Explicit {
        primitives: PrimitiveStream,
        a_grid: Vec<f64>,
        snapshot_dt: f64,
        #[serde(default)]
        events: bool,
    },
    Scaled {
        law: DistributionSpec,
        #[serde(default = "default_interarrival")]
        interarrival: InterarrivalKind,
        r: f64,
        kappa: f64,
        #[serde(rename = "T", default = "default_t")]
        t_end: f64,
        #[serde(default = "default_a_grid")]
        a_grid: Vec<f64>,
        /// Snapshots per unit of scaled time.
        #[serde(default = "default_snapshots")]
        snapshots: usize,
        #[serde(default)]
        initial: InitialRegime,
        seed: u64,
        #[serde(default)]
        events: bool,
    },
}

fn default_lambda() -> f64 {
    1.0
}
fn default_w0() -> W0Law {
    W0Law::Deterministic { w: 0.0 }
}
fn default_steps() -> usize {
    1024
}
fn default_paths() -> usize {
    10_000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RbmConfig {
    sigma: f64,
    kappa: f64,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default = "default_w0")]
    w0: W0Law,
    #[serde(rename = "T", default = "default_t")]
    t_end: f64,
    #[serde(default = "default_steps")]
    n_steps: usize,
    #[serde(default = "default_paths")]
    n_paths: usize,
    seed: u64,
}

fn load<T: DeserializeOwned>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    let path = path.as_ref().context("--config is required (see --example)")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())).into())
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(c: &Common) -> anyhow::Result<bool> {
    if c.example {
        print!("{SIMULATE_EXAMPLE}");
        println!("// or, with explicit primitives:");
        print!("{HAND_TRACE_EXAMPLE}");
        return Ok(true);
    }
    let (traj, scaled) = match load::<SimulateConfig>(&c.config)? {
        SimulateConfig::Explicit { primitives, a_grid, snapshot_dt, events } => {
            primitives.validate()?;
            let mut cfg = SimConfig::new(a_grid, snapshot_dt);
            if events {
                cfg = cfg.with_events();
            }
            (simulate_coupled(&primitives, &cfg)?, None)
        }
        SimulateConfig::Scaled { law, interarrival, r, kappa, t_end, a_grid, snapshots, initial, seed, events } => {
            let seed = c.seed.unwrap_or(seed);
            let law = Law::new(law)?;
            let p = make_params(&law, r, kappa)?;
            let inter = interarrival_with_rate(&interarrival, p.lambda_r)?;
            let cond = initial.condition(&p, seed);
            if snapshots == 0 {
                bail!(Error::ConfigInvalid("snapshots must be positive".into()));
            }
            let prims = generate_primitives(&law, &inter, &inter, &cond, p.horizon(t_end), seed)?;
            let mut cfg = p.sim_config(&a_grid, 1.0 / snapshots as f64);
            if events {
                cfg = cfg.with_events();
            }
            let traj = simulate_coupled(&prims, &cfg)?;
            let scaled = tilde_processes(&traj, &p, t_end, &a_grid)?;
            (traj, Some(scaled))
        }
    };
    match c.format {
        Format::Csv => {
            let mut w = create(&c.out, "trajectory.csv")?;
            traj.write_csv(&mut w)?;
            w.flush()?;
            if let Some(s) = &scaled {
                let mut w = create(&c.out, "scaled.csv")?;
                s.write_csv(&mut w)?;
                w.flush()?;
            }
        }
        Format::Json => {
            write_json(&c.out, "trajectory.json", &traj)?;
            if let Some(s) = &scaled {
                write_json(&c.out, "scaled.json", s)?;
            }
        }
    }
    if traj.events.is_some() {
        let mut w = create(&c.out, "events.jsonl")?;
        traj.write_event_log(&mut w)?;
        w.flush()?;
    }
    println!("wrote {} snapshots to {}", traj.snapshots.len(), c.out.display());
    Ok(true)
}

fn cmd_verify(c: &Common, reps: usize) -> anyhow::Result<bool> {
    if c.example {
        println!("verify takes no config; use --seed and --reps");
        return Ok(true);
    }
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions { seed: c.seed.unwrap_or(defaults.seed), harness_reps: reps, threads: None };
    let checks = run_all(&opts);
    println!("{:<6} {:<6} {:<14} {:<42} detail", "result", "kind", "module", "check");
    for ch in &checks {
        let result = if ch.pass { "PASS" } else { "FAIL" };
        let kind = if ch.hard { "hard" } else { "trend" };
        println!("{result:<6} {kind:<6} {:<14} {:<42} {}", ch.module, ch.name, ch.detail);
    }
    if c.format == Format::Json || c.config.is_some() {
        write_json(&c.out, "verify.json", &checks)?;
    }
    let ok = all_hard_pass(&checks);
    println!("{}", if ok { "all hard checks passed" } else { "hard check failure" });
    Ok(ok)
}

fn cmd_sweep(c: &Common, fclt: bool) -> anyhow::Result<bool> {
    if c.example {
        print!("{SWEEP_EXAMPLE}");
        return Ok(true);
    }
    let mut cfg: ExperimentConfig = load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let report = run_ensemble(&cfg)?;
    write_json(&c.out, "report.json", &report)?;
    let mut w = create(&c.out, "report.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    for t in &report.trends {
        let result = if t.pass { "PASS" } else { "FAIL" };
        println!("{result:<6} {:<32} {:?}", t.name, t.values);
    }
    for r in &report.per_r {
        println!("r = {}: {} sandwich checks, {} violations", r.r, r.sandwich.checks, r.sandwich.violations());
    }
    if fclt {
        let f = fclt_check(&cfg)?;
        write_json(&c.out, "fclt.json", &f)?;
        println!("sigma^2 = {}", f.sigma_squared);
        for row in &f.rows {
            println!(
                "r = {} t = {}: Var V = {:.4} (expected {:.4}), Var E = {:.4} (expected {:.4})",
                row.r, row.t, row.var_v, row.expected_var_v, row.var_e, row.expected_var_e
            );
        }
    }
    Ok(!report.hard_failure)
}

fn cmd_rbm(c: &Common) -> anyhow::Result<bool> {
    if c.example {
        print!("{RBM_EXAMPLE}");
        return Ok(true);
    }
    let cfg: RbmConfig = load(&c.config)?;
    if !(cfg.sigma >= 0.0 && cfg.lambda > 0.0 && cfg.n_paths > 0) {
        bail!(Error::ConfigInvalid(format!("need sigma ≥ 0, lambda > 0, n_paths > 0: {cfg:?}")));
    }
    let p = LimitParams { w0: cfg.w0, sigma: cfg.sigma, kappa: cfg.kappa, lambda: cfg.lambda };
    let seed = c.seed.unwrap_or(cfg.seed);
    let ends = rbm_endpoints(&p, cfg.t_end, cfg.n_steps, cfg.n_paths, seed)?;
    let summary = Summary::of(&ends)?;
    match c.format {
        Format::Csv => {
            let mut w = create(&c.out, "rbm_endpoints.csv")?;
            writeln!(w, "path,W_T")?;
            for (i, v) in ends.iter().enumerate() {
                writeln!(w, "{i},{v}")?;
            }
            w.flush()?;
        }
        Format::Json => write_json(&c.out, "rbm_endpoints.json", &ends)?,
    }
    write_json(&c.out, "rbm_summary.json", &summary)?;
    println!("paths = {}, mean W*(T) = {:.6} ± {:.6}, var = {:.6}", summary.n, summary.mean, summary.stderr(), summary.var);
    Ok(true)
}

fn cmd_walk(j: u32, l: u32, paths: usize, seed: u64) -> anyhow::Result<bool> {
    let exact = biased_walk_hit(j, l)?;
    let mc = biased_walk_mc(j, l, paths, &mut stream_rng(seed, stream::WALK))?;
    println!("j = {j}, l = {l}");
    println!("exact = {exact:.6}");
    println!("mc = {:.6} ± {:.6} ({} paths)", mc.estimate, mc.stderr, mc.n_paths);
    Ok(true)
}

fn cmd_dist(spec: DistributionSpec, rs: &[f64], xs: &[f64], format: Format) -> anyhow::Result<bool> {
    let law = Law::new(spec)?;
    #[derive(Serialize)]
    struct RRow {
        r: f64,
        c_r: f64,
        s_of_c_r: f64,
    }
    #[derive(Serialize)]
    struct XRow {
        x: f64,
        tail: f64,
        tail_work: f64,
        s: f64,
        ratio_tail_2: Option<f64>,
    }
    let r_rows = rs
        .iter()
        .map(|&r| {
            let c = law.s_inverse(r)?;
            Ok(RRow { r, c_r: c, s_of_c_r: law.big_s(c)? })
        })
        .collect::<srpt_ht::Result<Vec<_>>>()?;
    let x_rows = xs
        .iter()
        .map(|&x| {
            Ok(XRow {
                x,
                tail: law.tail(x),
                tail_work: law.tail_work(x)?,
                s: law.big_s(x)?,
                ratio_tail_2: law.ratio_tail(2.0, x).ok(),
            })
        })
        .collect::<srpt_ht::Result<Vec<_>>>()?;
    match format {
        Format::Csv => {
            println!("law = {spec}");
            for row in &r_rows {
                println!("r = {}: c_r = {:.6}, S(c_r) = {:.6}", row.r, row.c_r, row.s_of_c_r);
            }
            println!("x,tail,tail_work,S,ratio_tail_2");
            for row in &x_rows {
                let ratio = row.ratio_tail_2.map(|v| v.to_string()).unwrap_or_default();
                println!("{},{},{},{},{}", row.x, row.tail, row.tail_work, row.s, ratio);
            }
        }
        Format::Json => {
            let v = serde_json::json!({ "law": spec, "c_r": r_rows, "table": x_rows });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Verify { common, reps } => cmd_verify(common, *reps),
        Command::Sweep { common, fclt } => cmd_sweep(common, *fclt),
        Command::Rbm(c) => cmd_rbm(c),
        Command::Walk { j, l, paths, seed } => cmd_walk(*j, *l, *paths, *seed),
        Command::Dist { law, r, x, format } => cmd_dist(*law, r, x, *format),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
