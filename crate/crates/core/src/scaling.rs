//! Diffusion and distribution-dependent ("tilde") scaling.
//!
//! Time is sped up by `r²`, masses are multiplied by `c_r/r` and atom
//! locations divided by `c_r`, where `c_r = S⁻¹(r)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::Law;
use crate::engine::{MeasureSnapshot, SimConfig, Trajectory};
use crate::error::{Error, Result};

/// Scaled cutoffs used when none are given.
pub const DEFAULT_A_GRID: [f64; 9] = [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5, 2.0, 4.0];

/// Snapshots per scaled time horizon used when no step is given.
pub const DEFAULT_SNAPSHOTS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub r: f64,
    pub c_r: f64,
    pub lambda_r: f64,
    pub kappa: f64,
    pub law: Law,
}

/// Parameters of system `r` with `λ_r = (1 + κ/r)/E[v]`, so `r(ρ_r − 1) = κ`.
pub fn make_params(law: &Law, r: f64, kappa: f64) -> Result<ScalingParams> {
    if !(r > 1.0 / law.mean()) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("r = {r} must exceed 1/E[v] = {}", 1.0 / law.mean())));
    }
    let lambda_r = (1.0 + kappa / r) / law.mean();
    if !(lambda_r > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} gives a nonpositive arrival rate at r = {r}")));
    }
    let c_r = law.s_inverse(r)?;
    Ok(ScalingParams { r, c_r, lambda_r, kappa, law: law.clone() })
}

impl ScalingParams {
    pub fn rho(&self) -> f64 {
        self.lambda_r * self.law.mean()
    }

    /// Unscaled horizon `r²T`.
    pub fn horizon(&self, t_scaled: f64) -> f64 {
        self.r * self.r * t_scaled
    }

    /// Unscaled cutoffs `a·c_r`.
    pub fn unscaled_cutoffs(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.iter().map(|a| a * self.c_r).collect()
    }

    /// Engine options for tilde processes sampled every `dt` scaled time units.
    pub fn sim_config(&self, scaled_a: &[f64], dt_scaled: f64) -> SimConfig {
        SimConfig::new(self.unscaled_cutoffs(scaled_a), self.r * self.r * dt_scaled).with_gap_weights(vec![self.c_r])
    }
}

/// Atoms `(location, weight)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaledMeasure {
    pub atoms: Vec<(f64, f64)>,
}

impl ScaledMeasure {
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

/// Each atom `(x, 1)` becomes `(x/c_r, c_r/r)`.
pub fn dd_scale_measure(m: &MeasureSnapshot, p: &ScalingParams) -> ScaledMeasure {
    let weight = p.c_r / p.r;
    ScaledMeasure { atoms: m.atoms.iter().map(|&x| (x / p.c_r, weight)).collect() }
}

/// Share of mass in `(1 − eps, 1 + eps]`; `None` when the measure is empty.
pub fn concentration_ratio(m: &ScaledMeasure, eps: f64) -> Option<f64> {
    let total = m.mass();
    if total < 1e-12 {
        return None;
    }
    let near: f64 = m.atoms.iter().filter(|(x, _)| *x > 1.0 - eps && *x <= 1.0 + eps).map(|a| a.1).sum();
    Some(near / total)
}

/// Scaled load of the `a`-cutoff system minus one: `−λ_r S(c_r)/S(a c_r) + κ`.
pub fn drift(p: &ScalingParams, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("drift needs a > 0, got {a}")));
    }
    let s_c = p.law.big_s(p.c_r)?;
    let s_ac = p.law.big_s(a * p.c_r)?;
    // Ratio first so that a = 1 cancels exactly.
    Ok(p.kappa - p.lambda_r * (s_c / s_ac))
}

/// Limit of [`drift`] as `r → ∞`: `−∞` below 1, `κ − λ` at 1, `κ` above.
pub fn drift_limit(a: f64, lambda: f64, kappa: f64) -> f64 {
    if a < 1.0 {
        f64::NEG_INFINITY
    } else if a == 1.0 {
        kappa - lambda
    } else {
        kappa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledCutoff {
    pub a: f64,
    pub q_a: f64,
    pub w_a: f64,
    pub z_a: Option<f64>,
    pub y_a: Option<f64>,
    /// `τ(r²t, a c_r)/r²`.
    pub tau: f64,
    /// `t − tau`.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSnapshot {
    pub t: f64,
    pub q: f64,
    pub w: f64,
    pub cutoffs: Vec<ScaledCutoff>,
}

/// `‖·‖_T` functionals of the tilde processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSups {
    pub w: f64,
    pub q: f64,
    /// `‖Q̃ − W̃‖_T`, present if the engine tracked the gap weight `c_r`.
    pub q_minus_w: Option<f64>,
    /// Per requested cutoff: `(a, ‖W̃_a‖, ‖Q̃_a‖, ‖W̃ − W̃_a‖)`.
    pub cutoffs: Vec<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledTrajectory {
    pub r: f64,
    pub c_r: f64,
    pub lambda_r: f64,
    pub kappa: f64,
    pub t_end: f64,
    pub a_grid: Vec<f64>,
    pub snapshots: Vec<ScaledSnapshot>,
    /// Present when the trajectory horizon is exactly `r²T`.
    pub sups: Option<ScaledSups>,
}

/// Tilde processes on `[0, T]` for the scaled cutoffs `scaled_a`.
pub fn tilde_processes(traj: &Trajectory, p: &ScalingParams, t_end: f64, scaled_a: &[f64]) -> Result<ScaledTrajectory> {
    let r2 = p.r * p.r;
    let horizon = r2 * t_end;
    if traj.horizon < horizon * (1.0 - 1e-12) {
        return Err(Error::GridMismatch(format!("trajectory horizon {} is shorter than r²T = {horizon}", traj.horizon)));
    }
    let idx = scaled_a
        .iter()
        .map(|&a| {
            traj.cutoff_index(a * p.c_r)
                .ok_or_else(|| Error::GridMismatch(format!("cutoff a·c_r = {} missing from the engine grid", a * p.c_r)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mass = p.c_r / p.r;
    let snapshots = traj
        .snapshots
        .iter()
        .filter(|s| s.t <= horizon * (1.0 + 1e-12))
        .map(|s| {
            let t = s.t / r2;
            let cutoffs = idx
                .iter()
                .zip(scaled_a)
                .map(|(&i, &a)| {
                    let c = &s.cutoffs[i];
                    let tau = c.tau / r2;
                    ScaledCutoff {
                        a,
                        q_a: mass * c.q_a as f64,
                        w_a: c.w_a / p.r,
                        z_a: c.z_a.map(|z| mass * z as f64),
                        y_a: c.y_a.map(|y| y / p.r),
                        tau,
                        theta: t - tau,
                    }
                })
                .collect();
            ScaledSnapshot { t, q: mass * s.q as f64, w: s.w / p.r, cutoffs }
        })
        .collect();
    let exact_horizon = (traj.horizon - horizon).abs() <= 1e-12 * horizon;
    let sups = exact_horizon.then(|| {
        let ext = &traj.extrema;
        ScaledSups {
            w: ext.sup_w / p.r,
            q: mass * ext.sup_q as f64,
            q_minus_w: ext
                .gaps
                .iter()
                .find(|(g, _)| (g - p.c_r).abs() <= 1e-12 * p.c_r)
                .map(|(_, v)| v / p.r),
            cutoffs: idx
                .iter()
                .zip(scaled_a)
                .map(|(&i, &a)| {
                    let c = &ext.cutoffs[i];
                    (a, c.sup_w_a / p.r, mass * c.sup_q_a as f64, c.sup_w_above / p.r)
                })
                .collect(),
        }
    });
    Ok(ScaledTrajectory {
        r: p.r,
        c_r: p.c_r,
        lambda_r: p.lambda_r,
        kappa: p.kappa,
        t_end,
        a_grid: scaled_a.to_vec(),
        snapshots,
        sups,
    })
}

impl ScaledTrajectory {
    pub fn at(&self, t: f64) -> Option<&ScaledSnapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-12 * t.max(1.0))
    }

    /// Engine-style CSV preceded by a `#` header block with the parameters.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# scaled")?;
        writeln!(w, "# r={}", self.r)?;
        writeln!(w, "# c_r={}", self.c_r)?;
        writeln!(w, "# lambda_r={}", self.lambda_r)?;
        writeln!(w, "# kappa={}", self.kappa)?;
        write!(w, "t,Q,W")?;
        for a in &self.a_grid {
            write!(w, ",Q_a@{a},W_a@{a},Z_a@{a},tau@{a}")?;
        }
        writeln!(w)?;
        for s in &self.snapshots {
            write!(w, "{},{},{}", s.t, s.q, s.w)?;
            for c in &s.cutoffs {
                let z = c.z_a.map(|z| z.to_string()).unwrap_or_default();
                write!(w, ",{},{},{},{}", c.q_a, c.w_a, z, c.tau)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
