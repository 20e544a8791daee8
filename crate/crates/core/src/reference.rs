//! Limit objects: reflected Brownian motion, the step limit field in `a`,
//! and the biased random walk used as an analytic oracle.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Law;
use crate::error::{Error, Result};
use crate::paths::{reflect_grid, GridPath};
use crate::seed::{replication_seed, stream, stream_rng};

/// Law of the initial value `W*(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum W0Law {
    Deterministic { w: f64 },
    Exponential { mean: f64 },
}

impl W0Law {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            W0Law::Deterministic { w } => w,
            W0Law::Exponential { mean } => -mean * rng.sample::<f64, _>(rand::distr::Open01).ln(),
        }
    }
}

/// Parameters of `X*(t) = W*(0) + σB(t) + κt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub w0: W0Law,
    pub sigma: f64,
    pub kappa: f64,
    pub lambda: f64,
}

/// `σ² = λ(σ_S² + σ_A²)`.
pub fn sigma_squared(lambda: f64, sigma_s: f64, sigma_a: f64) -> f64 {
    lambda * (sigma_s * sigma_s + sigma_a * sigma_a)
}

impl LimitParams {
    /// Takes `λ = 1/E[interarrival]` and the standard deviations of both laws.
    pub fn from_laws(processing: &Law, interarrival: &Law, kappa: f64, w0: W0Law) -> Self {
        let lambda = 1.0 / interarrival.mean();
        let s2 = sigma_squared(lambda, processing.std_dev(), interarrival.std_dev());
        LimitParams { w0, sigma: s2.sqrt(), kappa, lambda }
    }
}

fn check_steps(n_steps: usize, t_end: f64) -> Result<()> {
    if n_steps == 0 || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("need n_steps ≥ 1 and T > 0, got {n_steps}, {t_end}")));
    }
    Ok(())
}

/// Euler walk of `X* − extra_drift·t`, handing `(k, X_k)` to `visit`.
///
/// Draw order: `W*(0)` first, then one normal per step.
fn walk_netput<R: Rng + ?Sized, F: FnMut(usize, f64)>(
    p: &LimitParams,
    extra_drift: &[f64],
    t_end: f64,
    n_steps: usize,
    rng: &mut R,
    mut visit: F,
) {
    let dt = t_end / n_steps as f64;
    let sd = p.sigma * dt.sqrt();
    let w0 = p.w0.draw(rng);
    let mut b = 0.0;
    for k in 0..=n_steps {
        if k > 0 {
            let xi: f64 = rng.sample(StandardNormal);
            b += xi;
        }
        let t = k as f64 * dt;
        for (i, d) in extra_drift.iter().enumerate() {
            visit(i * (n_steps + 1) + k, w0 + sd * b + (p.kappa - d) * t);
        }
    }
}

/// One grid path of `W* = Γ[X*]` with `n_steps` Euler steps on `[0, T]`.
pub fn rbm_sample<R: Rng + ?Sized>(p: &LimitParams, t_end: f64, n_steps: usize, rng: &mut R) -> Result<GridPath> {
    check_steps(n_steps, t_end)?;
    let mut values = vec![0.0; n_steps + 1];
    walk_netput(p, &[0.0], t_end, n_steps, rng, |k, x| values[k] = x);
    reflect_grid(&GridPath::new(0.0, t_end / n_steps as f64, values)?)
}

/// `W*(T)` from the same draws as [`rbm_sample`], without storing the path.
pub fn rbm_endpoint<R: Rng + ?Sized>(p: &LimitParams, t_end: f64, n_steps: usize, rng: &mut R) -> Result<f64> {
    Ok(limit_endpoints(p, t_end, n_steps, rng)?.1)
}

/// `(W*_1(T), W*(T))` on one shared noise path: the `a = 1` field and the
/// `a > 1` field (plain RBM).
pub fn limit_endpoints<R: Rng + ?Sized>(
    p: &LimitParams,
    t_end: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_steps(n_steps, t_end)?;
    if let W0Law::Deterministic { w } = p.w0 {
        if w < 0.0 {
            return Err(Error::NegativeInitialValue(w));
        }
    }
    let mut min = [0.0f64; 2];
    let mut last = [0.0f64; 2];
    walk_netput(p, &[p.lambda, 0.0], t_end, n_steps, rng, |idx, x| {
        let i = idx / (n_steps + 1);
        min[i] = min[i].min(x);
        last[i] = x - min[i];
    });
    Ok((last[0], last[1]))
}

/// Endpoint and grid suprema of `W*` and of the `a = 1` field `W*_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPathStats {
    pub w_end: f64,
    pub w_sup: f64,
    pub w1_end: f64,
    pub w1_sup: f64,
    /// `max_k (W*(t_k) − W*_1(t_k))`.
    pub gap_sup: f64,
}

/// [`limit_endpoints`] plus grid suprema, from the same draws.
pub fn limit_path_stats<R: Rng + ?Sized>(
    p: &LimitParams,
    t_end: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<LimitPathStats> {
    check_steps(n_steps, t_end)?;
    if let W0Law::Deterministic { w } = p.w0 {
        if w < 0.0 {
            return Err(Error::NegativeInitialValue(w));
        }
    }
    let mut min = [0.0f64; 2];
    let mut cur = [0.0f64; 2];
    let mut sup = [0.0f64; 2];
    let mut gap_sup = 0.0f64;
    walk_netput(p, &[p.lambda, 0.0], t_end, n_steps, rng, |idx, x| {
        let i = idx / (n_steps + 1);
        min[i] = min[i].min(x);
        cur[i] = x - min[i];
        sup[i] = sup[i].max(cur[i]);
        if i == 1 {
            gap_sup = gap_sup.max(cur[1] - cur[0]);
        }
    });
    Ok(LimitPathStats { w_end: cur[1], w_sup: sup[1], w1_end: cur[0], w1_sup: sup[0], gap_sup })
}

/// The limit field at cutoff `a`: zero below 1, `Γ[X* − λt]` at 1 and
/// `Γ[X*]` above. All regimes consume the same draws.
pub fn limit_field_sample<R: Rng + ?Sized>(
    p: &LimitParams,
    a: f64,
    t_end: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<GridPath> {
    check_steps(n_steps, t_end)?;
    let extra = if a == 1.0 { p.lambda } else { 0.0 };
    let mut values = vec![0.0; n_steps + 1];
    walk_netput(p, &[extra], t_end, n_steps, rng, |k, x| values[k] = x);
    let dt = t_end / n_steps as f64;
    if a < 1.0 {
        return GridPath::new(0.0, dt, vec![0.0; n_steps + 1]);
    }
    reflect_grid(&GridPath::new(0.0, dt, values)?)
}

/// `W*(T)` for `n_paths` independent paths, path `i` seeded from `(seed, i)`.
pub fn rbm_endpoints(p: &LimitParams, t_end: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(replication_seed(seed, 0, i as u64), stream::REFERENCE);
            rbm_endpoint(p, t_end, n_steps, &mut rng)
        })
        .collect()
}

/// Probability that the walk stepping `+1` w.p. 1/3 and `−1` w.p. 2/3
/// reaches `l` before `1` when started at `j`: `(2^j − 2)/(2^l − 2)`.
pub fn biased_walk_hit(j: u32, l: u32) -> Result<f64> {
    if j < 1 || l < j || l < 2 {
        return Err(Error::InvalidLevels { j, l });
    }
    // Divide through by 2^l so large levels do not overflow.
    let jl = 2f64.powi(j as i32 - l as i32);
    let one_l = 2f64.powi(1 - l as i32);
    Ok((jl - one_l) / (1.0 - one_l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of [`biased_walk_hit`].
pub fn biased_walk_mc<R: Rng + ?Sized>(j: u32, l: u32, n_paths: usize, rng: &mut R) -> Result<WalkEstimate> {
    biased_walk_hit(j, l)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be positive".into()));
    }
    let mut hits = 0usize;
    for _ in 0..n_paths {
        let mut x = j;
        while x != 1 && x != l {
            if rng.random_range(0..3u32) == 0 {
                x += 1;
            } else {
                x -= 1;
            }
        }
        hits += usize::from(x == l);
    }
    let p = hits as f64 / n_paths as f64;
    Ok(WalkEstimate { estimate: p, stderr: (p * (1.0 - p) / n_paths as f64).sqrt(), n_paths })
}

/// Mean, variance and deciles 0.1..0.9 of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub quantiles: Vec<(f64, f64)>,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Result<Summary> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = (1..=9).map(|k| k as f64 / 10.0).map(|q| (q, quantile_sorted(&sorted, q))).collect();
        Ok(Summary { n, mean, var, quantiles })
    }

    pub fn stderr(&self) -> f64 {
        (self.var / self.n as f64).sqrt()
    }

    pub fn median(&self) -> f64 {
        self.quantiles[4].1
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standard() -> LimitParams {
        LimitParams { w0: W0Law::Deterministic { w: 0.0 }, sigma: 1.0, kappa: 0.0, lambda: 1.0 }
    }

    #[test]
    fn sigma_squared_examples() {
        assert_eq!(sigma_squared(1.0, 1.0, 1.0), 2.0);
        assert_eq!(sigma_squared(2.0, 0.5, 0.5), 1.0);
        assert!((sigma_squared(1.3, 3.0 * 0.7, 3.0 * 0.2) - 9.0 * sigma_squared(1.3, 0.7, 0.2)).abs() < 1e-12);
        let e = Law::exponential(1.0).unwrap();
        assert_eq!(LimitParams::from_laws(&e, &e, 0.0, W0Law::Deterministic { w: 0.0 }).sigma, 2f64.sqrt());
    }

    #[test]
    fn degenerate_rbm() {
        let p = LimitParams { w0: W0Law::Deterministic { w: 1.0 }, sigma: 0.0, kappa: -1.0, lambda: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = rbm_sample(&p, 2.0, 8, &mut rng).unwrap();
        for (k, v) in g.values.iter().enumerate() {
            assert!((v - (1.0 - g.time(k)).max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoint_matches_grid() {
        for seed in 0..20 {
            let p = LimitParams { w0: W0Law::Exponential { mean: 0.5 }, sigma: 1.3, kappa: -0.4, lambda: 1.0 };
            let g = rbm_sample(&p, 1.0, 257, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let e = rbm_endpoint(&p, 1.0, 257, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(g.last(), e);
            assert!(g.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn limit_field_regimes() {
        let p = standard();
        let zero = limit_field_sample(&p, 0.5, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let two = limit_field_sample(&p, 2.0, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let rbm = rbm_sample(&p, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(two, rbm);
        let one = limit_field_sample(&p, 1.0, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(one.values.iter().zip(&two.values).all(|(a, b)| a <= b));
        let (e1, e2) = limit_endpoints(&p, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!((e1, e2), (one.last(), two.last()));
    }

    #[test]
    fn negative_drift_is_dominated() {
        for seed in 0..50 {
            let mut p = standard();
            let base = rbm_sample(&p, 1.0, 128, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            p.kappa = -0.7;
            let low = rbm_sample(&p, 1.0, 128, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(low.values.iter().zip(&base.values).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn walk_exact_values() {
        assert_eq!(biased_walk_hit(2, 3).unwrap(), 1.0 / 3.0);
        assert!((biased_walk_hit(3, 4).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(biased_walk_hit(2, 5).unwrap(), 1.0 / 15.0);
        assert_eq!(biased_walk_hit(4, 4).unwrap(), 1.0);
        assert_eq!(biased_walk_hit(1, 6).unwrap(), 0.0);
        assert!(biased_walk_hit(0, 3).is_err());
        assert!(biased_walk_hit(4, 3).is_err());
        assert!(biased_walk_hit(1, 1).is_err());
        assert!(biased_walk_hit(1000, 1001).unwrap() > 0.49);
    }

    #[test]
    fn walk_monotonicity() {
        for l in 3..12 {
            let h: Vec<f64> = (1..=l).map(|j| biased_walk_hit(j, l).unwrap()).collect();
            assert!(h.windows(2).all(|w| w[0] < w[1]));
        }
        for j in 2..8 {
            let h: Vec<f64> = (j..j + 8).map(|l| biased_walk_hit(j, l).unwrap()).collect();
            assert!(h.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn walk_boundaries_exact_in_mc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(biased_walk_mc(1, 5, 100, &mut rng).unwrap().estimate, 0.0);
        assert_eq!(biased_walk_mc(5, 5, 100, &mut rng).unwrap().estimate, 1.0);
    }

    #[test]
    fn summary_quantiles() {
        let xs: Vec<f64> = (0..=10).map(f64::from).collect();
        let s = Summary::of(&xs).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.median(), 5.0);
        assert_eq!(s.quantiles[0], (0.1, 1.0));
        assert_eq!(s.var, 11.0);
        assert!(Summary::of(&[]).is_err());
    }
}
