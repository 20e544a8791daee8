//! Coupled Monte Carlo ensembles over a sequence of systems `r`.
//!
//! Each replication draws one [`PrimitiveStream`] and feeds it to the full
//! engine and to one truncated engine per cutoff. Scaled functionals at the
//! horizon `T` are summarized per `r`, compared to a reflected Brownian
//! reference by two-sample KS, and checked for monotone trends in `r`.
//!
//! [`PrimitiveStream`]: crate::engine::PrimitiveStream

use std::io::{self, Write};

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, Law};
use crate::engine::{generate_primitives, interarrival_with_rate, simulate, simulate_coupled, InitialCondition, InterarrivalKind, Trajectory};
use crate::error::{Error, Result};
use crate::reference::{limit_path_stats, LimitParams, LimitPathStats, Summary, W0Law};
use crate::scaling::{concentration_ratio, dd_scale_measure, make_params, tilde_processes, ScalingParams, DEFAULT_A_GRID};
use crate::seed::{replication_seed, stream, stream_rng};

/// Relative slack for the workload sandwiches.
pub const WORK_TOL: f64 = 1e-9;

/// Replication index space reserved for the reference ensemble.
const REFERENCE_R_INDEX: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    #[serde(rename = "WT")]
    WT,
    #[serde(rename = "supW_a")]
    SupWa,
    #[serde(rename = "supQ_a")]
    SupQa,
    #[serde(rename = "supQminusW")]
    SupQMinusW,
    #[serde(rename = "supWminusWa")]
    SupWMinusWa,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "conc")]
    Conc,
    #[serde(rename = "Z_sandwich")]
    ZSandwich,
}

impl Functional {
    pub const ALL: [Functional; 8] = [
        Functional::WT,
        Functional::SupWa,
        Functional::SupQa,
        Functional::SupQMinusW,
        Functional::SupWMinusWa,
        Functional::Theta,
        Functional::Conc,
        Functional::ZSandwich,
    ];
}

/// Initial state of each system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialRegime {
    #[default]
    Empty,
    /// `⌊w·r/c_r⌋` tasks of size `c_r`.
    AtomNearOne { w: f64 },
    /// As `atom_near_one` with `w` drawn per replication from an exponential law.
    ExponentialAtom { mean: f64 },
}

impl InitialRegime {
    pub fn w0_law(&self) -> W0Law {
        match *self {
            InitialRegime::Empty => W0Law::Deterministic { w: 0.0 },
            InitialRegime::AtomNearOne { w } => W0Law::Deterministic { w },
            InitialRegime::ExponentialAtom { mean } => W0Law::Exponential { mean },
        }
    }

    /// The engine's initial condition for system `p` in the replication seeded by `seed`.
    pub fn condition(&self, p: &ScalingParams, seed: u64) -> InitialCondition {
        let atom = |w| InitialCondition::AtomNearOne { w, r: p.r, c_r: p.c_r };
        match *self {
            InitialRegime::Empty => InitialCondition::Empty,
            InitialRegime::AtomNearOne { w } => atom(w),
            InitialRegime::ExponentialAtom { mean } => {
                let u: f64 = stream_rng(seed, stream::INITIAL).sample(Open01);
                atom(-mean * u.ln())
            }
        }
    }
}

fn default_t() -> f64 {
    1.0
}
fn default_a_grid() -> Vec<f64> {
    DEFAULT_A_GRID.to_vec()
}
fn default_eps() -> Vec<f64> {
    vec![0.5]
}
fn default_functionals() -> Vec<Functional> {
    Functional::ALL.to_vec()
}
fn default_snapshots() -> usize {
    200
}
fn default_reference_steps() -> usize {
    4096
}

/// One experiment: a processing law, an interarrival family and a sequence
/// of systems `r`, each run for `reps` coupled replications on `[0, r²T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub law: DistributionSpec,
    #[serde(default = "default_interarrival")]
    pub interarrival: InterarrivalKind,
    pub kappa: f64,
    pub r_list: Vec<f64>,
    pub reps: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default = "default_a_grid")]
    pub a_grid: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps_list: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<Functional>,
    #[serde(default)]
    pub initial: InitialRegime,
    /// Snapshots per unit of scaled time.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Reference paths; 0 means `reps`.
    #[serde(default)]
    pub reference_paths: usize,
    #[serde(default = "default_reference_steps")]
    pub reference_steps: usize,
}

fn default_interarrival() -> InterarrivalKind {
    InterarrivalKind::Exponential
}

impl ExperimentConfig {
    /// Config with defaults for every optional field.
    pub fn new(law: DistributionSpec, kappa: f64, r_list: Vec<f64>, reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            law,
            interarrival: default_interarrival(),
            kappa,
            r_list,
            reps,
            t_end: default_t(),
            a_grid: default_a_grid(),
            eps_list: default_eps(),
            seed,
            functionals: default_functionals(),
            initial: InitialRegime::Empty,
            snapshots: default_snapshots(),
            reference_paths: 0,
            reference_steps: default_reference_steps(),
        }
    }

    pub fn validate(&self) -> Result<Law> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        let law = Law::new(self.law).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if !law.has_unbounded_support() {
            return bad(format!("processing law {} has bounded support, so c_r = S⁻¹(r) is undefined", self.law));
        }
        if self.r_list.is_empty() {
            return bad("r_list is empty".into());
        }
        if self.r_list.windows(2).any(|w| !(w[0] < w[1])) {
            return bad(format!("r_list {:?} is not strictly increasing", self.r_list));
        }
        if let Some(r) = self.r_list.iter().find(|&&r| !(r.is_finite() && r > 1.0 / law.mean())) {
            return bad(format!("r = {r} must exceed 1/E[v] = {}", 1.0 / law.mean()));
        }
        if self.reps < 2 {
            return bad(format!("reps = {} (need at least 2)", self.reps));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("T = {}", self.t_end));
        }
        if self.a_grid.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return bad(format!("a_grid {:?} must be positive", self.a_grid));
        }
        if self.eps_list.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return bad(format!("eps_list {:?} must be positive", self.eps_list));
        }
        if self.snapshots == 0 || self.reference_steps == 0 {
            return bad("snapshots and reference_steps must be positive".into());
        }
        match self.initial {
            InitialRegime::AtomNearOne { w } if !(w >= 0.0 && w.is_finite()) => return bad(format!("initial w = {w}")),
            InitialRegime::ExponentialAtom { mean } if !(mean > 0.0 && mean.is_finite()) => {
                return bad(format!("initial mean = {mean}"))
            }
            _ => {}
        }
        if !(1.0 + self.kappa / self.r_list[0] > 0.0) {
            return bad(format!("kappa = {} gives a nonpositive arrival rate at r = {}", self.kappa, self.r_list[0]));
        }
        Ok(law)
    }

    fn wants(&self, f: Functional) -> bool {
        self.functionals.contains(&f)
    }

    /// Limit parameters with `λ = 1/E[v]` and `σ² = λ(σ_S² + σ_A²)`.
    pub fn limit_params(&self, law: &Law) -> Result<LimitParams> {
        let inter = interarrival_with_rate(&self.interarrival, 1.0 / law.mean())?;
        Ok(LimitParams::from_laws(law, &inter, self.kappa, self.initial.w0_law()))
    }
}

/// What a functional's limit is, evaluated on one reference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LimitValue {
    Zero,
    One,
    WEnd,
    WSup,
    W1End,
    W1Sup,
    GapSup,
}

impl LimitValue {
    fn of(self, s: &LimitPathStats) -> f64 {
        match self {
            LimitValue::Zero => 0.0,
            LimitValue::One => 1.0,
            LimitValue::WEnd => s.w_end,
            LimitValue::WSup => s.w_sup,
            LimitValue::W1End => s.w1_end,
            LimitValue::W1Sup => s.w1_sup,
            LimitValue::GapSup => s.gap_sup,
        }
    }
}

/// Sample slot per reported functional.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    WT,
    WaT(usize),
    SupWa(usize),
    SupQa(usize),
    SupQMinusW,
    SupWMinusWa(usize),
    Theta(usize),
    Conc(f64),
}

fn a_label(a: f64) -> String {
    format!("{a}")
}

fn slots(cfg: &ExperimentConfig) -> Vec<(String, Slot, LimitValue)> {
    let mut out = Vec::new();
    let cut = |a: f64, below: LimitValue, at: LimitValue, above: LimitValue| {
        if a < 1.0 {
            below
        } else if a == 1.0 {
            at
        } else {
            above
        }
    };
    if cfg.wants(Functional::WT) {
        out.push(("WT".to_string(), Slot::WT, LimitValue::WEnd));
        for (i, &a) in cfg.a_grid.iter().enumerate() {
            if a >= 1.0 {
                out.push((format!("WaT@{}", a_label(a)), Slot::WaT(i), cut(a, LimitValue::Zero, LimitValue::W1End, LimitValue::WEnd)));
            }
        }
    }
    if cfg.wants(Functional::SupWa) {
        for (i, &a) in cfg.a_grid.iter().enumerate() {
            out.push((format!("supW_a@{}", a_label(a)), Slot::SupWa(i), cut(a, LimitValue::Zero, LimitValue::W1Sup, LimitValue::WSup)));
        }
    }
    if cfg.wants(Functional::SupQa) {
        for (i, &a) in cfg.a_grid.iter().enumerate().filter(|(_, &a)| a < 1.0) {
            out.push((format!("supQ_a@{}", a_label(a)), Slot::SupQa(i), LimitValue::Zero));
        }
    }
    if cfg.wants(Functional::SupQMinusW) {
        out.push(("supQminusW".to_string(), Slot::SupQMinusW, LimitValue::Zero));
    }
    if cfg.wants(Functional::SupWMinusWa) {
        for (i, &a) in cfg.a_grid.iter().enumerate() {
            out.push((
                format!("supWminusWa@{}", a_label(a)),
                Slot::SupWMinusWa(i),
                cut(a, LimitValue::WSup, LimitValue::GapSup, LimitValue::Zero),
            ));
        }
    }
    if cfg.wants(Functional::Theta) {
        for (i, &a) in cfg.a_grid.iter().enumerate().filter(|(_, &a)| a < 1.0) {
            out.push((format!("theta@{}", a_label(a)), Slot::Theta(i), LimitValue::Zero));
        }
    }
    if cfg.wants(Functional::Conc) {
        for &eps in &cfg.eps_list {
            out.push((format!("conc@{eps}"), Slot::Conc(eps), LimitValue::One));
        }
    }
    out
}

/// Violation counters of the coupled pathwise bounds; all must stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichCounts {
    /// Snapshot-cutoff pairs examined.
    pub checks: u64,
    /// `Y_a ≤ W_a`.
    pub w_lower: u64,
    /// `W_a ≤ Y_a + a`.
    pub w_upper: u64,
    /// `Z_a ≤ Q_a`.
    pub q_lower: u64,
    /// `Q_a ≤ Z_a + 1`.
    pub q_upper: u64,
    /// `Z_x ≤ Z_y` for `x < y`.
    pub z_monotone: u64,
    /// `Z_y − Z_x ≤ 1 + Y_y/x` for `x < y`.
    pub z_gap: u64,
    /// `W_a(τ(t, a)) ≤ W_a(0) + a`.
    pub tau_bound: u64,
}

impl SandwichCounts {
    pub fn violations(&self) -> u64 {
        self.w_lower + self.w_upper + self.q_lower + self.q_upper + self.z_monotone + self.z_gap + self.tau_bound
    }

    fn add(&mut self, o: &SandwichCounts) {
        self.checks += o.checks;
        self.w_lower += o.w_lower;
        self.w_upper += o.w_upper;
        self.q_lower += o.q_lower;
        self.q_upper += o.q_upper;
        self.z_monotone += o.z_monotone;
        self.z_gap += o.z_gap;
        self.tau_bound += o.tau_bound;
    }

    fn named(&self) -> [(&'static str, u64); 8] {
        [
            ("checks", self.checks),
            ("w_lower", self.w_lower),
            ("w_upper", self.w_upper),
            ("q_lower", self.q_lower),
            ("q_upper", self.q_upper),
            ("z_monotone", self.z_monotone),
            ("z_gap", self.z_gap),
            ("tau_bound", self.tau_bound),
        ]
    }
}

/// Counts sandwich violations in a trajectory from [`simulate_coupled`].
///
/// The `τ` bound is checked for every cutoff; the others need `z_a`/`y_a`.
pub fn count_sandwich(traj: &Trajectory) -> SandwichCounts {
    let mut c = SandwichCounts::default();
    let Some(first) = traj.snapshots.first() else { return c };
    let mut order: Vec<usize> = (0..traj.a_grid.len()).collect();
    order.sort_by(|&i, &j| traj.a_grid[i].total_cmp(&traj.a_grid[j]));
    for s in &traj.snapshots {
        let tol = WORK_TOL * (1.0 + s.w);
        for (i, cut) in s.cutoffs.iter().enumerate() {
            let a = traj.a_grid[i];
            c.checks += 1;
            if cut.w_a_at_tau > first.cutoffs[i].w_a + a + tol {
                c.tau_bound += 1;
            }
            if let (Some(z), Some(y)) = (cut.z_a, cut.y_a) {
                c.w_lower += u64::from(y > cut.w_a + tol);
                c.w_upper += u64::from(cut.w_a > y + a + tol);
                c.q_lower += u64::from(z > cut.q_a);
                c.q_upper += u64::from(cut.q_a > z + 1);
            }
        }
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                let (x, lo, hi) = (traj.a_grid[i], &s.cutoffs[i], &s.cutoffs[j]);
                if let (Some(zx), Some(zy), Some(yy)) = (lo.z_a, hi.z_a, hi.y_a) {
                    c.z_monotone += u64::from(zx > zy);
                    c.z_gap += u64::from(zy.saturating_sub(zx) as f64 > 1.0 + yy / x + tol);
                }
            }
        }
    }
    c
}

/// Statistics of one functional at one `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub name: String,
    pub summary: Summary,
    /// Two-sample KS distance to the reference ensemble.
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RReport {
    pub r: f64,
    pub c_r: f64,
    pub lambda_r: f64,
    pub functionals: Vec<FunctionalStats>,
    /// `(a, KS(W̃_a(T), W̃(T)))` for cutoffs `a ≥ 1`.
    pub step_ks: Vec<(f64, f64)>,
    pub sandwich: SandwichCounts,
}

impl RReport {
    pub fn functional(&self, name: &str) -> Option<&FunctionalStats> {
        self.functionals.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    StrictlyDecreasing,
    NonIncreasing,
    NonDecreasing,
    /// Last value at most the first and at most a bound.
    EndsBelow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub name: String,
    pub kind: TrendKind,
    pub values: Vec<f64>,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl TrendVerdict {
    pub fn new(name: String, kind: TrendKind, values: Vec<f64>, bound: Option<f64>) -> Self {
        let pass = match kind {
            TrendKind::StrictlyDecreasing => values.windows(2).all(|w| w[1] < w[0]),
            TrendKind::NonIncreasing => values.windows(2).all(|w| w[1] <= w[0]),
            TrendKind::NonDecreasing => values.windows(2).all(|w| w[1] >= w[0]),
            TrendKind::EndsBelow => match (values.first(), values.last()) {
                (Some(f), Some(l)) => l <= f && bound.is_none_or(|b| *l <= b),
                _ => false,
            },
        };
        TrendVerdict { name, kind, values, bound, pass }
    }
}

/// KS bound on `W̃(T)` against the reference at the largest `r`.
pub const KS_WT_BOUND: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub limit: LimitParams,
    pub per_r: Vec<RReport>,
    pub trends: Vec<TrendVerdict>,
    /// A sandwich bound failed in some replication.
    pub hard_failure: bool,
}

impl ConvergenceReport {
    pub fn trend(&self, name: &str) -> Option<&TrendVerdict> {
        self.trends.iter().find(|t| t.name == name)
    }

    /// One row per `(r, functional, statistic)`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,functional,statistic,value")?;
        for rr in &self.per_r {
            let r = rr.r;
            for f in &rr.functionals {
                let s = &f.summary;
                writeln!(w, "{r},{},n,{}", f.name, s.n)?;
                writeln!(w, "{r},{},mean,{}", f.name, s.mean)?;
                writeln!(w, "{r},{},var,{}", f.name, s.var)?;
                writeln!(w, "{r},{},stderr,{}", f.name, s.stderr())?;
                for (q, v) in &s.quantiles {
                    writeln!(w, "{r},{},q{q},{v}", f.name)?;
                }
                writeln!(w, "{r},{},ks,{}", f.name, f.ks)?;
            }
            for (a, ks) in &rr.step_ks {
                writeln!(w, "{r},WaT@{a},ks_vs_WT,{ks}")?;
            }
            for (name, v) in rr.sandwich.named() {
                writeln!(w, "{r},sandwich,{name},{v}")?;
            }
        }
        Ok(())
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F̂_x − F̂_y|`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    // Once one sample is exhausted its CDF is 1; the other's only grows.
    d = d.max((i as f64 / n - j as f64 / m).abs());
    Ok(d)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))
}

/// Worker count from `SRPT_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("SRPT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::ConfigInvalid(format!("SRPT_THREADS={v:?} is not a worker count"))),
        Err(_) => Ok(None),
    }
}

struct Replication {
    values: Vec<Option<f64>>,
    sandwich: SandwichCounts,
}

fn run_replication(
    cfg: &ExperimentConfig,
    law: &Law,
    inter: &Law,
    p: &ScalingParams,
    slots: &[(String, Slot, LimitValue)],
    seed: u64,
) -> Result<Replication> {
    let initial = cfg.initial.condition(p, seed);
    let prims = generate_primitives(law, inter, inter, &initial, p.horizon(cfg.t_end), seed)?;
    let sim = p.sim_config(&cfg.a_grid, 1.0 / cfg.snapshots as f64);
    let coupled = cfg.wants(Functional::ZSandwich);
    let traj = if coupled { simulate_coupled(&prims, &sim)? } else { simulate(&prims, &sim)? };
    let tilde = tilde_processes(&traj, p, cfg.t_end, &cfg.a_grid)?;
    let sups = tilde
        .sups
        .as_ref()
        .ok_or_else(|| Error::GridMismatch("suprema need a horizon of exactly r²T".into()))?;
    let last = tilde.snapshots.last().ok_or_else(|| Error::GridMismatch("no snapshots".into()))?;
    let measure = dd_scale_measure(&traj.final_measure, p);
    let values = slots
        .iter()
        .map(|(_, slot, _)| match *slot {
            Slot::WT => Some(last.w),
            Slot::WaT(i) => Some(last.cutoffs[i].w_a),
            Slot::SupWa(i) => Some(sups.cutoffs[i].1),
            Slot::SupQa(i) => Some(sups.cutoffs[i].2),
            Slot::SupQMinusW => sups.q_minus_w,
            Slot::SupWMinusWa(i) => Some(sups.cutoffs[i].3),
            Slot::Theta(i) => Some(last.cutoffs[i].theta),
            Slot::Conc(eps) => concentration_ratio(&measure, eps),
        })
        .collect();
    let sandwich = if coupled { count_sandwich(&traj) } else { SandwichCounts::default() };
    Ok(Replication { values, sandwich })
}

/// Runs every replication and assembles the report, with `SRPT_THREADS`
/// capping the worker count.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    run_ensemble_with_threads(cfg, threads_from_env()?)
}

/// [`run_ensemble`] on a pool of `threads` workers (rayon's default when
/// `None`). The report does not depend on the worker count.
pub fn run_ensemble_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ConvergenceReport> {
    let law = cfg.validate()?;
    let limit = cfg.limit_params(&law)?;
    let slots = slots(cfg);
    let pool = thread_pool(threads)?;

    let n_ref = if cfg.reference_paths == 0 { cfg.reps } else { cfg.reference_paths };
    let reference: Vec<LimitPathStats> = pool.install(|| {
        (0..n_ref)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(replication_seed(cfg.seed, REFERENCE_R_INDEX, i as u64), stream::REFERENCE);
                limit_path_stats(&limit, cfg.t_end, cfg.reference_steps, &mut rng)
            })
            .collect::<Result<_>>()
    })?;

    let mut per_r = Vec::with_capacity(cfg.r_list.len());
    for (r_idx, &r) in cfg.r_list.iter().enumerate() {
        let p = make_params(&law, r, cfg.kappa)?;
        let inter = interarrival_with_rate(&cfg.interarrival, p.lambda_r)?;
        let reps: Vec<Replication> = pool.install(|| {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(cfg.seed, r_idx as u64, rep as u64);
                    run_replication(cfg, &law, &inter, &p, &slots, seed).map_err(|e| Error::Replication {
                        seed,
                        r,
                        rep,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()
        })?;

        let mut sandwich = SandwichCounts::default();
        for rep in &reps {
            sandwich.add(&rep.sandwich);
        }
        let column = |k: usize| reps.iter().filter_map(|rep| rep.values[k]).collect::<Vec<f64>>();
        let mut functionals = Vec::with_capacity(slots.len());
        for (k, (name, _, lim)) in slots.iter().enumerate() {
            let xs = column(k);
            if xs.is_empty() {
                continue;
            }
            let refs: Vec<f64> = reference.iter().map(|s| lim.of(s)).collect();
            functionals.push(FunctionalStats { name: name.clone(), summary: Summary::of(&xs)?, ks: ks_two_sample(&xs, &refs)? });
        }
        let mut step_ks = Vec::new();
        if let Some(wt) = slots.iter().position(|s| s.1 == Slot::WT) {
            let w = column(wt);
            for (k, (_, slot, _)) in slots.iter().enumerate() {
                if let Slot::WaT(i) = *slot {
                    step_ks.push((cfg.a_grid[i], ks_two_sample(&column(k), &w)?));
                }
            }
        }
        per_r.push(RReport { r, c_r: p.c_r, lambda_r: p.lambda_r, functionals, step_ks, sandwich });
    }

    let trends = trends(cfg, &per_r);
    let hard_failure = per_r.iter().any(|r| r.sandwich.violations() > 0);
    Ok(ConvergenceReport { config: cfg.clone(), limit, per_r, trends, hard_failure })
}

fn trends(cfg: &ExperimentConfig, per_r: &[RReport]) -> Vec<TrendVerdict> {
    let mut out = Vec::new();
    let Some(first) = per_r.first() else { return out };
    let series = |name: &str, stat: fn(&FunctionalStats) -> f64| -> Option<Vec<f64>> {
        per_r.iter().map(|r| r.functional(name).map(stat)).collect()
    };
    let median = |f: &FunctionalStats| f.summary.median();
    let mean = |f: &FunctionalStats| f.summary.mean;
    let ks = |f: &FunctionalStats| f.ks;
    for f in &first.functionals {
        let name = f.name.as_str();
        let verdict = if name == "supQminusW"
            || name.starts_with("supQ_a@")
            || name.starts_with("theta@")
            || (name.starts_with("supWminusWa@") && cfg.a_grid.iter().any(|&a| a > 1.0 && name == format!("supWminusWa@{a}")))
        {
            series(name, median).map(|v| TrendVerdict::new(format!("median {name}"), TrendKind::StrictlyDecreasing, v, None))
        } else if name.starts_with("conc@") {
            series(name, mean).map(|v| TrendVerdict::new(format!("mean {name}"), TrendKind::NonDecreasing, v, None))
        } else if name == "WT" {
            series(name, ks).map(|v| TrendVerdict::new("KS WT vs reference".into(), TrendKind::EndsBelow, v, Some(KS_WT_BOUND)))
        } else {
            None
        };
        out.extend(verdict);
    }
    for (k, &(a, _)) in first.step_ks.iter().enumerate() {
        if a > 1.0 {
            let v: Vec<f64> = per_r.iter().map(|r| r.step_ks[k].1).collect();
            out.push(TrendVerdict::new(format!("KS WaT@{a} vs WT"), TrendKind::EndsBelow, v, None));
        }
    }
    out
}

/// Variance checks of the centered arrival and work processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltRow {
    pub r: f64,
    pub t: f64,
    /// Sample mean and variance of `V̂(t) = (V(r²t) − ρ r² t)/r`.
    pub mean_v: f64,
    pub stderr_v: f64,
    pub var_v: f64,
    /// `σ²t`.
    pub expected_var_v: f64,
    /// Sample variance of `Ê(t) = (E(r²t) − λ_r r² t)/r`.
    pub var_e: f64,
    /// `λ³σ_A²t`.
    pub expected_var_e: f64,
}

impl FcltRow {
    pub fn rel_err_v(&self) -> f64 {
        (self.var_v / self.expected_var_v - 1.0).abs()
    }

    pub fn rel_err_e(&self) -> f64 {
        (self.var_e / self.expected_var_e - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltReport {
    pub sigma_squared: f64,
    pub rows: Vec<FcltRow>,
}

/// Scaled times at which [`fclt_check`] evaluates.
pub const FCLT_TIMES: [f64; 2] = [0.5, 1.0];

/// Estimates `Var V̂(t)` and `Var Ê(t)` at `t ∈ {0.5, 1}` for every `r`.
pub fn fclt_check(cfg: &ExperimentConfig) -> Result<FcltReport> {
    fclt_check_with_threads(cfg, threads_from_env()?)
}

pub fn fclt_check_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<FcltReport> {
    let law = cfg.validate()?;
    let limit = cfg.limit_params(&law)?;
    let inter_limit = interarrival_with_rate(&cfg.interarrival, limit.lambda)?;
    let sigma_a2 = inter_limit.variance();
    let pool = thread_pool(threads)?;
    let t_max = FCLT_TIMES.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (r_idx, &r) in cfg.r_list.iter().enumerate() {
        let p = make_params(&law, r, cfg.kappa)?;
        let inter = interarrival_with_rate(&cfg.interarrival, p.lambda_r)?;
        let samples: Vec<Vec<(f64, f64)>> = pool.install(|| {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(cfg.seed, r_idx as u64, rep as u64);
                    let prims = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, p.horizon(t_max), seed)
                        .map_err(|e| Error::Replication { seed, r, rep, source: Box::new(e) })?;
                    Ok(FCLT_TIMES
                        .iter()
                        .map(|&t| {
                            let u = p.horizon(t);
                            let v_hat = (prims.arrived_work(u, None) - p.rho() * u) / r;
                            let e_hat = (prims.arrival_count(u) as f64 - p.lambda_r * u) / r;
                            (v_hat, e_hat)
                        })
                        .collect())
                })
                .collect::<Result<_>>()
        })?;
        for (k, &t) in FCLT_TIMES.iter().enumerate() {
            let v: Vec<f64> = samples.iter().map(|s| s[k].0).collect();
            let e: Vec<f64> = samples.iter().map(|s| s[k].1).collect();
            let sv = Summary::of(&v)?;
            let se = Summary::of(&e)?;
            rows.push(FcltRow {
                r,
                t,
                mean_v: sv.mean,
                stderr_v: sv.stderr(),
                var_v: sv.var,
                expected_var_v: limit.sigma * limit.sigma * t,
                var_e: se.var,
                expected_var_e: limit.lambda.powi(3) * sigma_a2 * t,
            });
        }
    }
    Ok(FcltReport { sigma_squared: limit.sigma * limit.sigma, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DistributionSpec::Exponential { rate: 1.0 }, -0.5, vec![5.0, 10.0], 6, 11);
        cfg.a_grid = vec![0.5, 1.0, 2.0];
        cfg.snapshots = 20;
        cfg.reference_steps = 64;
        cfg
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample));
        assert_eq!(ks_two_sample(&[1.0], &[]), Err(Error::EmptySample));
    }

    #[test]
    fn config_validation() {
        let ok = small_config();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.r_list = vec![8.0, 4.0];
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
        let mut c = ok.clone();
        c.reps = 1;
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
        let mut c = ok.clone();
        c.r_list = vec![0.5, 4.0];
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
        let mut c = ok.clone();
        c.law = DistributionSpec::Deterministic { value: 1.0 };
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn strict_config_parse() {
        let json = r#"{"law":{"kind":"exponential","rate":1},"kappa":-0.5,"r_list":[10,20],"reps":4,"seed":1}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.t_end, 1.0);
        assert_eq!(cfg.a_grid, DEFAULT_A_GRID.to_vec());
        let bad = r#"{"law":{"kind":"exponential","rate":1},"kappa":-0.5,"r_list":[10],"reps":4,"seed":1,"extra":0}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }

    #[test]
    fn worker_count_does_not_change_report() {
        let cfg = small_config();
        let serial = run_ensemble_with_threads(&cfg, Some(1)).unwrap();
        let parallel = run_ensemble_with_threads(&cfg, Some(3)).unwrap();
        assert_eq!(serial, parallel);
        assert!(!serial.hard_failure);
        assert!(serial.per_r.iter().all(|r| r.sandwich.checks > 0));
        assert!(serial.per_r.iter().flat_map(|r| &r.functionals).all(|f| (0.0..=1.0).contains(&f.ks)));
    }

    #[test]
    fn trend_kinds() {
        let t = |k, v: Vec<f64>, b| TrendVerdict::new("x".into(), k, v, b).pass;
        assert!(t(TrendKind::StrictlyDecreasing, vec![3.0, 2.0, 1.0], None));
        assert!(!t(TrendKind::StrictlyDecreasing, vec![3.0, 3.0, 1.0], None));
        assert!(t(TrendKind::NonDecreasing, vec![1.0, 1.0, 2.0], None));
        assert!(t(TrendKind::EndsBelow, vec![0.3, 0.4, 0.1], Some(0.15)));
        assert!(!t(TrendKind::EndsBelow, vec![0.3, 0.2], Some(0.15)));
    }

    #[test]
    fn csv_rows() {
        let rep = run_ensemble_with_threads(&small_config(), Some(1)).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,functional,statistic,value\n"));
        assert!(text.contains("\n5,WT,mean,"));
        assert!(text.contains("\n10,sandwich,w_upper,0\n"));
    }
}
