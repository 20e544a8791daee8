use serde::{Deserialize, Serialize};

use crate::distributions::{Law, DistributionSpec};
use crate::error::{Error, Result};
use crate::seed::{stream, stream_rng};

/// One realization of the model inputs, shared by coupled engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveStream {
    /// Remaining times at `t = 0`; task indices run `-n+1..=0` in this order.
    pub initial_tasks: Vec<f64>,
    /// Strictly increasing, all in `(0, horizon]`; task `i` arrives at `arrival_times[i-1]`.
    pub arrival_times: Vec<f64>,
    pub sizes: Vec<f64>,
    pub horizon: f64,
}

impl PrimitiveStream {
    pub fn new(initial_tasks: Vec<f64>, arrival_times: Vec<f64>, sizes: Vec<f64>, horizon: f64) -> Result<Self> {
        let p = PrimitiveStream { initial_tasks, arrival_times, sizes, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon {}", self.horizon));
        }
        if self.arrival_times.len() != self.sizes.len() {
            return bad(format!("{} arrival times but {} sizes", self.arrival_times.len(), self.sizes.len()));
        }
        if let Some(&v) = self.initial_tasks.iter().chain(&self.sizes).find(|v| !(v.is_finite() && **v > 0.0)) {
            return bad(format!("task size {v} is not positive"));
        }
        let mut prev = 0.0;
        for &u in &self.arrival_times {
            if !(u > prev) || u > self.horizon {
                return bad(format!("arrival time {u} out of order or outside (0, {}]", self.horizon));
            }
            prev = u;
        }
        Ok(())
    }

    /// Initial workload counting only tasks of size at most `a`.
    pub fn initial_workload(&self, a: Option<f64>) -> f64 {
        self.initial_tasks.iter().filter(|&&v| a.is_none_or(|a| v <= a)).sum()
    }

    /// Arrived work `V(t)` on `(0, t]`, restricted to sizes at most `a`.
    pub fn arrived_work(&self, t: f64, a: Option<f64>) -> f64 {
        self.arrival_times
            .iter()
            .zip(&self.sizes)
            .take_while(|(&u, _)| u <= t)
            .filter(|(_, &v)| a.is_none_or(|a| v <= a))
            .map(|(_, &v)| v)
            .sum()
    }

    /// Number of arrivals in `(0, t]`.
    pub fn arrival_count(&self, t: f64) -> usize {
        self.arrival_times.partition_point(|&u| u <= t)
    }
}

/// How the queue is populated at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Empty,
    /// `⌊w·r/c_r⌋` tasks of size `c_r`, so the scaled measure is close to `w·δ₁`.
    AtomNearOne { w: f64, r: f64, c_r: f64 },
    Explicit { tasks: Vec<f64> },
}

impl InitialCondition {
    pub fn tasks(&self) -> Result<Vec<f64>> {
        match self {
            InitialCondition::Empty => Ok(Vec::new()),
            InitialCondition::AtomNearOne { w, r, c_r } => {
                if !(*w >= 0.0 && *r > 0.0 && *c_r > 0.0) {
                    return Err(Error::InvalidParameter(format!("atom_near_one w={w}, r={r}, c_r={c_r}")));
                }
                let n = (w * r / c_r).floor() as usize;
                Ok(vec![*c_r; n])
            }
            InitialCondition::Explicit { tasks } => Ok(tasks.clone()),
        }
    }
}

/// Draws initial tasks, a delayed renewal arrival stream on `(0, horizon]`
/// and i.i.d. sizes, each from its own stream of `seed`.
pub fn generate_primitives(
    processing: &Law,
    interarrival: &Law,
    first_arrival: &Law,
    initial: &InitialCondition,
    horizon: f64,
    seed: u64,
) -> Result<PrimitiveStream> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon}")));
    }
    let mut arr_rng = stream_rng(seed, stream::ARRIVALS);
    let mut size_rng = stream_rng(seed, stream::SIZES);
    let mut arrival_times = Vec::with_capacity((horizon / interarrival.mean()).ceil() as usize + 16);
    let mut t = first_arrival.sample(&mut arr_rng);
    while t <= horizon {
        arrival_times.push(t);
        let mut gap = interarrival.sample(&mut arr_rng);
        // Guard against a zero gap from a law with an atom at 0.
        while gap <= 0.0 {
            gap = interarrival.sample(&mut arr_rng);
        }
        t += gap;
    }
    let sizes = arrival_times.iter().map(|_| processing.sample(&mut size_rng)).collect();
    PrimitiveStream::new(initial.tasks()?, arrival_times, sizes, horizon)
}

/// An interarrival law of the given kind with mean `1/rate`.
///
/// Uniform kinds use `[0, 2/rate]`; Weibull keeps the requested shape.
pub fn interarrival_with_rate(kind: &InterarrivalKind, rate: f64) -> Result<Law> {
    let mean = 1.0 / rate;
    let spec = match *kind {
        InterarrivalKind::Exponential => DistributionSpec::Exponential { rate },
        InterarrivalKind::Deterministic => DistributionSpec::Deterministic { value: mean },
        InterarrivalKind::Uniform => DistributionSpec::Uniform { lo: 0.0, hi: 2.0 * mean },
        InterarrivalKind::Weibull { shape } => {
            DistributionSpec::Weibull { scale: rate * libm::tgamma(1.0 + 1.0 / shape), shape }
        }
    };
    Law::new(spec)
}

/// Family of the interarrival law; its rate is fixed by the system index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InterarrivalKind {
    Exponential,
    Deterministic,
    Uniform,
    Weibull { shape: f64 },
}
