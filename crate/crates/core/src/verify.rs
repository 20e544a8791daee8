//! Named invariant checks, run by `srpt-ht verify`.
//!
//! Each [`Check`] is either hard (an exact or pathwise property that must
//! hold in every trial) or a trend (a Monte Carlo direction at desk-scale
//! `r`, reported but not fatal).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, Law};
use crate::engine::{
    generate_primitives, simulate, simulate_coupled, workload_from_reflection, InitialCondition, PrimitiveStream, SimConfig,
};
use crate::error::Result;
use crate::harness::{count_sandwich, run_ensemble_with_threads, ExperimentConfig, TrendKind, TrendVerdict};
use crate::paths::{sup_norm_diff, PathBuilder, PiecewiseLinearPath};
use crate::reference::{biased_walk_hit, rbm_endpoint, rbm_sample, LimitParams, Summary, W0Law};
use crate::scaling::{dd_scale_measure, drift, make_params, tilde_processes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub hard: bool,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Replications per `r` for the harness trend checks.
    pub harness_reps: usize,
    /// Worker count for the harness checks; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 20240917, harness_reps: 500, threads: None }
    }
}

pub fn all_hard_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass || !c.hard)
}

type Outcome = Result<(bool, String)>;

fn check(module: &'static str, name: &'static str, hard: bool, f: impl FnOnce() -> Outcome) -> Check {
    let (pass, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Check { module, name, hard, pass, detail }
}

/// A random path with up to `max_segments` segments of duration in
/// `[0.01, 1.5)`, slopes in `[-3, 2)`, upward jumps in `[0, 2)` and initial
/// value in `[0, 3)`.
pub fn random_path<R: Rng + ?Sized>(rng: &mut R, max_segments: usize) -> Result<PiecewiseLinearPath> {
    let n = rng.random_range(1..=max_segments);
    let mut b = PathBuilder::new(3.0 * rng.random::<f64>());
    for k in 0..n {
        if k > 0 {
            b.jump(2.0 * rng.random::<f64>());
        }
        let t = b.time() + 0.01 + 1.49 * rng.random::<f64>();
        b.extend_to(t, -3.0 + 5.0 * rng.random::<f64>())?;
    }
    b.finish()
}

/// A path on the same breakpoints as `f` whose initial value, jumps and
/// slopes are each no larger than those of `f`.
fn shrunk_path<R: Rng + ?Sized>(rng: &mut R, f: &PiecewiseLinearPath) -> Result<PiecewiseLinearPath> {
    let mut b = PathBuilder::new(f.initial_value() * rng.random::<f64>());
    for (k, s) in f.segments().iter().enumerate() {
        if k > 0 {
            b.jump(s.jump * rng.random::<f64>());
        }
        let slope = s.slope - rng.random::<f64>();
        if s.duration > 0.0 {
            b.extend_to(s.start + s.duration, slope)?;
        }
    }
    b.finish()
}

fn laws() -> Vec<Law> {
    vec![
        Law::exponential(1.0).unwrap(),
        Law::exponential(2.5).unwrap(),
        Law::weibull(1.0, 2.0).unwrap(),
        Law::weibull(0.8, 0.6).unwrap(),
        Law::pareto(2.0, 1.0).unwrap(),
    ]
}

/// A short random stream with a few initial tasks and load near one.
fn random_stream(rng: &mut ChaCha8Rng, with_initial: bool) -> Result<PrimitiveStream> {
    let law = if rng.random::<bool>() { Law::exponential(1.0)? } else { Law::weibull(0.886_226_925_452_758, 2.0)? };
    let rho = 0.8 + 0.3 * rng.random::<f64>();
    let inter = Law::exponential(rho / law.mean())?;
    let initial = if with_initial {
        let n = rng.random_range(0..4);
        InitialCondition::Explicit { tasks: (0..n).map(|_| law.sample(rng)).collect() }
    } else {
        InitialCondition::Empty
    };
    let horizon = 20.0 + 80.0 * rng.random::<f64>();
    generate_primitives(&law, &inter, &inter, &initial, horizon, rng.random())
}

const CUTS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// Runs every named check.
pub fn run_all(opts: &VerifyOptions) -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(distribution_checks(opts.seed));
    out.extend(path_checks(opts.seed));
    out.extend(engine_checks(opts.seed));
    out.extend(scaling_checks(opts.seed));
    out.extend(reference_checks(opts.seed));
    out.extend(harness_checks(opts));
    out.push(output_determinism(opts.seed));
    out
}

pub fn distribution_checks(seed: u64) -> Vec<Check> {
    let m = "distributions";
    vec![
        check(m, "big_s monotone", true, || {
            let mut worst = 0.0f64;
            for law in laws() {
                let mut prev = law.big_s(0.0)?;
                for k in 1..=80 {
                    let s = law.big_s(k as f64 * 0.25)?;
                    worst = worst.max(prev - s);
                    prev = s;
                }
            }
            Ok((worst <= 0.0, format!("largest decrease {worst:e}")))
        }),
        check(m, "s_inverse consistency", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = 0.0f64;
            for law in laws() {
                let s0 = law.big_s(0.0)?;
                for _ in 0..100 {
                    let r = (s0 + 0.01) * (1e6 / (s0 + 0.01)).powf(rng.random::<f64>());
                    let c = law.s_inverse(r)?;
                    worst = worst.max((law.big_s(c)? - r).abs() / r);
                }
            }
            Ok((worst <= 1e-9, format!("max relative error {worst:e}")))
        }),
        check(m, "closed form matches quadrature", true, || {
            let mut worst = 0.0f64;
            for law in [Law::exponential(1.0)?, Law::exponential(3.0)?, Law::pareto(2.0, 1.0)?, Law::pareto(3.5, 0.5)?] {
                for x in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
                    worst = worst.max((law.tail_work(x)? - law.tail_work_quadrature(x)?).abs());
                }
            }
            Ok((worst <= 1e-8, format!("max abs difference {worst:e}")))
        }),
        check(m, "rapid variation trend", true, || {
            let mut ok = true;
            let mut notes = Vec::new();
            for law in [Law::exponential(1.0)?, Law::weibull(1.0, 2.0)?] {
                let ratios = (1..=20).map(|x| law.ratio_tail(2.0, x as f64)).collect::<Result<Vec<_>>>()?;
                let dec = ratios.windows(2).all(|w| w[1] <= w[0]);
                let last = *ratios.last().unwrap();
                ok &= dec && last < 1e-6;
                notes.push(format!("{}: last {last:e}", law.spec()));
            }
            let p = Law::pareto(2.0, 1.0)?;
            let mut dev = 0.0f64;
            for x in 1..=20 {
                dev = dev.max((p.ratio_tail(2.0, x as f64)? - 0.125).abs());
            }
            ok &= dev <= 1e-12;
            notes.push(format!("pareto deviation {dev:e}"));
            Ok((ok, notes.join("; ")))
        }),
        check(m, "mean equals tail_work(0)", true, || {
            let mut exact = true;
            let mut numeric = 0.0f64;
            for law in laws() {
                let h0 = law.tail_work(0.0)?;
                match law.spec() {
                    DistributionSpec::Weibull { shape, .. } if *shape != 1.0 => {
                        numeric = numeric.max((h0 - law.mean()).abs() / law.quadrature_tol())
                    }
                    _ => exact &= h0 == law.mean(),
                }
            }
            Ok((exact && numeric <= 1.0, format!("closed forms exact: {exact}; quadrature error / tol {numeric:.3}")))
        }),
    ]
}

pub fn path_checks(seed: u64) -> Vec<Check> {
    let m = "paths";
    let trials = 500;
    vec![
        check(m, "reflection nonnegative", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let mut worst = 0.0f64;
            for _ in 0..trials {
                let g = random_path(&mut rng, 30)?.skorokhod_map()?;
                for &t in g.breakpoints() {
                    worst = worst.min(g.value_at(t)?);
                }
            }
            Ok((worst >= 0.0, format!("minimum at breakpoints {worst:e}")))
        }),
        check(m, "Lipschitz factor 2", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let mut fails = 0;
            for _ in 0..trials {
                let f1 = random_path(&mut rng, 30)?;
                let f2 = random_path(&mut rng, 30)?;
                let t = f1.horizon().min(f2.horizon());
                let lhs = sup_norm_diff(&f1.skorokhod_map()?, &f2.skorokhod_map()?, t)?;
                let rhs = 2.0 * sup_norm_diff(&f1, &f2, t)?;
                fails += usize::from(lhs > rhs + 1e-12);
            }
            Ok((fails == 0, format!("{fails}/{trials} violations")))
        }),
        check(m, "monotonicity", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let mut fails = 0;
            for _ in 0..trials {
                let f2 = random_path(&mut rng, 30)?;
                let f1 = shrunk_path(&mut rng, &f2)?;
                let (g1, g2) = (f1.skorokhod_map()?, f2.skorokhod_map()?);
                let t_end = f1.horizon().min(f2.horizon());
                let bad = (0..=400).map(|k| t_end * k as f64 / 400.0).any(|t| {
                    let t = t.min(t_end);
                    g1.value_at(t).unwrap() > g2.value_at(t).unwrap() + 1e-12
                });
                fails += usize::from(bad);
            }
            Ok((fails == 0, format!("{fails}/{trials} violations")))
        }),
        check(m, "shift property", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
            let mut worst = 0.0f64;
            for _ in 0..trials {
                let f = random_path(&mut rng, 30)?;
                let g = f.skorokhod_map()?;
                let s = f.horizon() * rng.random::<f64>();
                let t = (f.horizon() - s) * rng.random::<f64>();
                let shifted = f.restrict_from(s)?.offset(g.value_at(s)? - f.value_at(s)?);
                let lhs = g.value_at((s + t).min(f.horizon()))?;
                let rhs = shifted.skorokhod_map()?.value_at(t.min(shifted.horizon()))?;
                worst = worst.max((lhs - rhs).abs());
            }
            Ok((worst <= 1e-12, format!("max difference {worst:e}")))
        }),
        check(m, "identity on nonnegative paths", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
            let mut fails = 0;
            let mut tried = 0;
            for _ in 0..trials {
                let f = random_path(&mut rng, 30)?;
                let lifted = f.offset((1e-9 - f.infimum()).max(0.0));
                if lifted.infimum() < 0.0 {
                    continue;
                }
                tried += 1;
                fails += usize::from(lifted.skorokhod_map()? != lifted);
            }
            Ok((fails == 0, format!("{fails}/{tried} paths changed")))
        }),
    ]
}

/// FIFO queue length after each of `times`, for arrivals only.
fn fifo_queue_lengths(p: &PrimitiveStream, times: &[f64]) -> Vec<usize> {
    let mut departures = Vec::with_capacity(p.sizes.len());
    let mut free = 0.0f64;
    for (&u, &v) in p.arrival_times.iter().zip(&p.sizes) {
        free = free.max(u) + v;
        departures.push(free);
    }
    times
        .iter()
        .map(|&t| p.arrival_times.iter().zip(&departures).filter(|&(&u, &d)| u <= t && d > t).count())
        .collect()
}

pub fn engine_checks(seed: u64) -> Vec<Check> {
    let m = "srpt_engine";
    vec![
        check(m, "work conservation", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 10);
            let mut worst = 0.0f64;
            for _ in 0..200 {
                let p = random_stream(&mut rng, true)?;
                worst = worst.max(simulate(&p, &SimConfig::new(vec![], 1.0))?.max_conservation_residual);
            }
            Ok((worst <= 1e-12, format!("max relative residual {worst:e}")))
        }),
        check(m, "reflection identity", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 11);
            let mut worst = 0.0f64;
            for _ in 0..200 {
                let p = random_stream(&mut rng, true)?;
                let tr = simulate(&p, &SimConfig::new(vec![], 0.5))?;
                let g = workload_from_reflection(&p, None, p.initial_workload(None))?;
                for s in &tr.snapshots {
                    worst = worst.max((s.w - g.value_at(s.t)?).abs());
                }
            }
            Ok((worst <= 1e-9, format!("max |W − Γ[X]| {worst:e}")))
        }),
        check(m, "cutoff sandwich", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 12);
            let mut c = crate::harness::SandwichCounts::default();
            for _ in 0..200 {
                let p = random_stream(&mut rng, true)?;
                let s = count_sandwich(&simulate_coupled(&p, &SimConfig::new(CUTS.to_vec(), 0.25))?);
                c.checks += s.checks;
                c.w_lower += s.w_lower + s.w_upper;
                c.q_lower += s.q_lower + s.q_upper;
            }
            let bad = c.w_lower + c.q_lower;
            Ok((bad == 0, format!("{} workload and {} queue-length violations in {} checks", c.w_lower, c.q_lower, c.checks)))
        }),
        check(m, "two-sided truncated bound", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 13);
            let (mut mono, mut gap) = (0, 0);
            for _ in 0..200 {
                let p = random_stream(&mut rng, true)?;
                let s = count_sandwich(&simulate_coupled(&p, &SimConfig::new(CUTS.to_vec(), 0.25))?);
                mono += s.z_monotone;
                gap += s.z_gap;
            }
            Ok((mono + gap == 0, format!("{mono} monotonicity and {gap} gap violations")))
        }),
        check(m, "tau tracking", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 14);
            let mut bad = 0;
            for _ in 0..200 {
                let p = random_stream(&mut rng, true)?;
                bad += count_sandwich(&simulate(&p, &SimConfig::new(CUTS.to_vec(), 0.25))?).tau_bound;
            }
            Ok((bad == 0, format!("{bad} violations of W_a(τ) ≤ W_a(0) + a")))
        }),
        check(m, "SRPT queue length at most FIFO", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 15);
            let mut bad = 0;
            for _ in 0..100 {
                let law = Law::exponential(1.0)?;
                let inter = Law::exponential(0.9 + 0.3 * rng.random::<f64>())?;
                let p = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, 30.0, rng.random())?;
                let tr = simulate(&p, &SimConfig::new(vec![], 30.0).with_events())?;
                let events = tr.events.as_ref().expect("events recorded");
                let times: Vec<f64> = events.iter().map(|e| e.t).collect();
                let fifo = fifo_queue_lengths(&p, &times);
                bad += events.iter().zip(&fifo).filter(|(e, &f)| e.q > f).count();
            }
            Ok((bad == 0, format!("{bad} event times with Q_SRPT > Q_FIFO")))
        }),
        check(m, "determinism", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 16);
            let s: u64 = rng.random();
            let law = Law::weibull(1.0, 2.0)?;
            let inter = Law::exponential(1.0 / law.mean())?;
            let run = || -> Result<_> {
                let p = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, 200.0, s)?;
                simulate_coupled(&p, &SimConfig::new(CUTS.to_vec(), 1.0).with_events())
            };
            let same = run()? == run()?;
            Ok((same, format!("two runs of seed {s} identical: {same}")))
        }),
    ]
}

pub fn scaling_checks(seed: u64) -> Vec<Check> {
    let m = "scaling";
    vec![
        check(m, "workload scale identity", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 20);
            let law = Law::exponential(1.0)?;
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let r = 5.0 + 15.0 * rng.random::<f64>();
                let p = make_params(&law, r, -0.5)?;
                let inter = Law::exponential(p.lambda_r)?;
                let prims = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, p.horizon(1.0), rng.random())?;
                let tr = simulate(&prims, &p.sim_config(&[1.0], 0.05).with_measures())?;
                let tilde = tilde_processes(&tr, &p, 1.0, &[1.0])?;
                for (s, meas) in tilde.snapshots.iter().zip(tr.measures.as_ref().expect("measures recorded")) {
                    let w = dd_scale_measure(meas, &p).integrate(|x| x);
                    worst = worst.max((w - s.w).abs() / (1.0 + s.w));
                }
            }
            Ok((worst <= 1e-12, format!("max relative difference {worst:e}")))
        }),
        check(m, "S-cancellation at a = 1", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 21);
            let mut worst = 0.0f64;
            for law in laws() {
                for _ in 0..20 {
                    let r = 2.0 / law.mean() * 1e4f64.powf(rng.random::<f64>());
                    let kappa = -2.0 * rng.random::<f64>();
                    let p = make_params(&law, r, kappa)?;
                    worst = worst.max((drift(&p, 1.0)? + p.lambda_r - kappa).abs());
                }
            }
            Ok((worst <= 1e-9, format!("max |drift(1) + λ_r − κ| {worst:e}")))
        }),
        check(m, "drift nondecreasing in a", true, || {
            let mut worst = 0.0f64;
            for law in laws() {
                let p = make_params(&law, 50.0 / law.mean(), -0.5)?;
                let mut prev = drift(&p, 0.1)?;
                for k in 2..=40 {
                    let d = drift(&p, 0.1 * k as f64)?;
                    worst = worst.max(prev - d);
                    prev = d;
                }
            }
            Ok((worst <= 0.0, format!("largest decrease {worst:e}")))
        }),
        check(m, "c_r/r decreasing", true, || {
            let law = Law::exponential(1.0)?;
            let v = [1e1, 1e2, 1e3, 1e4].iter().map(|&r| Ok(law.s_inverse(r)? / r)).collect::<Result<Vec<f64>>>()?;
            Ok((v.windows(2).all(|w| w[1] < w[0]), format!("{v:?}")))
        }),
        check(m, "scaled sandwiches", true, || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 22);
            let mut bad = 0;
            for law in [Law::exponential(1.0)?, Law::weibull(0.886_226_925_452_758, 2.0)?] {
                for r in [10.0, 20.0] {
                    let p = make_params(&law, r, -0.5)?;
                    let inter = Law::exponential(p.lambda_r)?;
                    for _ in 0..10 {
                        let prims = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, p.horizon(1.0), rng.random())?;
                        let a = [0.5, 1.0, 2.0];
                        let tr = simulate_coupled(&prims, &p.sim_config(&a, 0.01))?;
                        let tilde = tilde_processes(&tr, &p, 1.0, &a)?;
                        let mass = p.c_r / p.r;
                        for s in &tilde.snapshots {
                            let tol = 1e-9 * (1.0 + s.w);
                            for c in &s.cutoffs {
                                let (z, y) = (c.z_a.unwrap_or(f64::NAN), c.y_a.unwrap_or(f64::NAN));
                                let dw = c.w_a - y;
                                let dq = c.q_a - z;
                                bad += usize::from(!(dw >= -tol && dw <= c.a * mass + tol));
                                bad += usize::from(!(dq >= 0.0 && dq <= mass * (1.0 + 1e-12)));
                            }
                        }
                    }
                }
            }
            Ok((bad == 0, format!("{bad} violations")))
        }),
    ]
}

pub fn reference_checks(seed: u64) -> Vec<Check> {
    let m = "reference";
    vec![
        check(m, "walk probability monotone in j and l", true, || {
            let mut ok = true;
            for l in 2..=12u32 {
                let h = (1..=l).map(|j| biased_walk_hit(j, l)).collect::<Result<Vec<_>>>()?;
                ok &= h.windows(2).all(|w| w[1] > w[0]);
            }
            for j in 2..=8u32 {
                let h = (j..=14).map(|l| biased_walk_hit(j, l)).collect::<Result<Vec<_>>>()?;
                ok &= h.windows(2).all(|w| w[1] < w[0]);
            }
            Ok((ok, "l ≤ 14".into()))
        }),
        check(m, "negative drift dominated on coupled noise", true, || {
            let mut worst = f64::NEG_INFINITY;
            for i in 0..200u64 {
                let base = LimitParams { w0: W0Law::Exponential { mean: 0.5 }, sigma: 1.3, kappa: 0.0, lambda: 1.0 };
                let neg = LimitParams { kappa: -1.5, ..base };
                let g0 = rbm_sample(&base, 1.0, 512, &mut ChaCha8Rng::seed_from_u64(seed ^ (100 + i)))?;
                let g1 = rbm_sample(&neg, 1.0, 512, &mut ChaCha8Rng::seed_from_u64(seed ^ (100 + i)))?;
                for (a, b) in g1.values.iter().zip(&g0.values) {
                    worst = worst.max(a - b);
                }
            }
            Ok((worst <= 1e-12, format!("max W*_κ<0 − W*_κ=0 {worst:e}")))
        }),
        check(m, "grid refinement stable", false, || {
            let p = LimitParams { w0: W0Law::Deterministic { w: 0.0 }, sigma: 1.0, kappa: 0.0, lambda: 1.0 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 30);
            let n = 20_000;
            let coarse = (0..n).map(|_| rbm_endpoint(&p, 1.0, 4096, &mut rng)).collect::<Result<Vec<_>>>()?;
            let fine = (0..n).map(|_| rbm_endpoint(&p, 1.0, 8192, &mut rng)).collect::<Result<Vec<_>>>()?;
            let (a, b) = (Summary::of(&coarse)?, Summary::of(&fine)?);
            let se = (a.stderr().powi(2) + b.stderr().powi(2)).sqrt();
            let diff = (a.mean - b.mean).abs();
            Ok((diff < 2.0 * se, format!("|Δ mean| = {diff:.5}, 2·stderr = {:.5}", 2.0 * se)))
        }),
    ]
}

/// The shipped heavy-traffic experiment with `reps` replications.
fn trend_config(seed: u64, reps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DistributionSpec::Exponential { rate: 1.0 }, -0.5, vec![20.0, 40.0, 80.0], reps, seed);
    cfg.a_grid = vec![0.5, 1.0, 2.0, 4.0];
    cfg
}

pub fn harness_checks(opts: &VerifyOptions) -> Vec<Check> {
    let m = "harness";
    let cfg = trend_config(opts.seed, opts.harness_reps.max(2));
    let report = run_ensemble_with_threads(&cfg, opts.threads);
    let verdict = |names: &[&str]| -> Outcome {
        let rep = report.as_ref().map_err(Clone::clone)?;
        let mut pass = true;
        let mut notes = Vec::new();
        for n in names {
            match rep.trend(n) {
                Some(t) => {
                    pass &= t.pass;
                    notes.push(format!("{n}: {:?}", t.values));
                }
                None => {
                    pass = false;
                    notes.push(format!("{n}: missing"));
                }
            }
        }
        Ok((pass, notes.join("; ")))
    };
    vec![
        check(m, "coupling integrity", true, || {
            let rep = report.as_ref().map_err(Clone::clone)?;
            let v: u64 = rep.per_r.iter().map(|r| r.sandwich.violations()).sum();
            let n: u64 = rep.per_r.iter().map(|r| r.sandwich.checks).sum();
            Ok((!rep.hard_failure && v == 0, format!("{v} violations in {n} checks")))
        }),
        check(m, "worker count does not change report", true, || {
            let mut small = trend_config(opts.seed, 8);
            small.r_list = vec![10.0, 20.0];
            let serial = run_ensemble_with_threads(&small, Some(1))?;
            let parallel = run_ensemble_with_threads(&small, Some(4))?;
            Ok((serial == parallel, "1 vs 4 workers".into()))
        }),
        check(m, "step-field shape", false, || {
            let (ks, ks_detail) = verdict(&["KS WaT@2 vs WT", "KS WaT@4 vs WT"])?;
            let rep = report.as_ref().map_err(Clone::clone)?;
            // Strict decrease of the median, as stated; see the decisions ledger.
            let mut med_pass = true;
            let mut notes = vec![ks_detail];
            for a in [2.0, 4.0] {
                let name = format!("supWminusWa@{a}");
                let v: Vec<f64> = rep.per_r.iter().filter_map(|r| r.functional(&name)).map(|f| f.summary.median()).collect();
                let t = TrendVerdict::new(name.clone(), TrendKind::StrictlyDecreasing, v, None);
                med_pass &= t.pass;
                notes.push(format!("median {name}: {:?}", t.values));
            }
            Ok((ks && med_pass, notes.join("; ")))
        }),
        check(m, "theta trend", false, || verdict(&["median theta@0.5"])),
        check(m, "concentration trend", false, || verdict(&["mean conc@0.5"])),
    ]
}

/// Byte-identical CSV from two runs on one seed.
pub fn output_determinism(seed: u64) -> Check {
    check("cli", "same invocation gives identical bytes", true, || {
        let law = Law::exponential(1.0)?;
        let p = make_params(&law, 10.0, -0.5)?;
        let render = || -> Result<Vec<u8>> {
            let inter = Law::exponential(p.lambda_r)?;
            let prims = generate_primitives(&law, &inter, &inter, &InitialCondition::Empty, p.horizon(1.0), seed)?;
            let tr = simulate_coupled(&prims, &p.sim_config(&[0.5, 1.0, 2.0], 0.01))?;
            let mut buf = Vec::new();
            tilde_processes(&tr, &p, 1.0, &[0.5, 1.0, 2.0])?.write_csv(&mut buf).expect("write to Vec");
            Ok(buf)
        };
        let same = render()? == render()?;
        Ok((same, format!("seed {seed}")))
    })
}
