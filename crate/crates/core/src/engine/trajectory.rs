use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point measure with a unit atom at each remaining time, in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSnapshot {
    pub t: f64,
    pub atoms: Vec<f64>,
}

impl MeasureSnapshot {
    /// `⟨1, ·⟩`.
    pub fn count(&self) -> usize {
        self.atoms.len()
    }

    /// `⟨χ, ·⟩`.
    pub fn workload(&self) -> f64 {
        self.atoms.iter().sum()
    }

    /// `⟨f, ·⟩`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|&x| f(x)).sum()
    }

    /// Count and workload of atoms in `[0, a]`.
    pub fn cutoff(&self, a: f64) -> (usize, f64) {
        let k = self.atoms.partition_point(|&x| x <= a);
        (k, self.atoms[..k].iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    Completion,
    TruncatedSkip,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Completion => "completion",
            EventKind::TruncatedSkip => "truncated-skip",
        }
    }
}

/// One engine event; `q` and `w` hold the state right after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub task: i64,
    #[serde(skip)]
    pub q: usize,
    #[serde(skip)]
    pub w: f64,
}

/// State restricted to one cutoff `a` at a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSample {
    pub a: f64,
    /// Tasks with remaining time in `[0, a]`.
    pub q_a: usize,
    pub w_a: f64,
    /// Queue length and workload of the run that discards sizes above `a`.
    pub z_a: Option<usize>,
    pub y_a: Option<f64>,
    /// `τ(t, a) = sup{s ≤ t : W_a(s) = 0}`, 0 if the set is empty.
    pub tau: f64,
    pub w_a_at_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub q: usize,
    pub w: f64,
    pub cutoffs: Vec<CutoffSample>,
}

/// Path suprema for one cutoff over `[0, horizon]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CutoffExtrema {
    pub a: f64,
    pub sup_q_a: usize,
    pub sup_w_a: f64,
    /// `sup (W − W_a)`: workload of tasks with remaining time above `a`.
    pub sup_w_above: f64,
}

/// Event-level suprema, exact because `Q` is constant and `W` linear
/// between events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub sup_q: usize,
    pub sup_w: f64,
    pub cutoffs: Vec<CutoffExtrema>,
    /// `(α, sup |αQ − W|)` per configured gap weight.
    pub gaps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: f64,
    pub truncation: Option<f64>,
    pub a_grid: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub extrema: Extrema,
    pub initial_count: usize,
    pub initial_workload: f64,
    /// Work admitted on `(0, horizon]`.
    pub arrived_work: f64,
    pub idle_total: f64,
    /// Largest `|W − (W(0) + V − t + I)| / (1 + W(0) + V + t)` over event times.
    pub max_conservation_residual: f64,
    pub final_measure: MeasureSnapshot,
    pub events: Option<Vec<Event>>,
    pub measures: Option<Vec<MeasureSnapshot>>,
}

impl Trajectory {
    pub fn cutoff_index(&self, a: f64) -> Option<usize> {
        self.a_grid.iter().position(|&g| (g - a).abs() <= 1e-12 * a.abs().max(1.0))
    }

    /// Exact cumulative idle time on `[0, t]`, replayed from the event log.
    pub fn idle_time(&self, t: f64) -> Result<f64> {
        let events = self.events.as_ref().ok_or(Error::EventLogMissing)?;
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon });
        }
        let mut idle = 0.0;
        let mut from = 0.0;
        let mut q = self.initial_count;
        for e in events {
            if e.t > t {
                break;
            }
            if q == 0 {
                idle += e.t - from;
            }
            from = e.t;
            q = e.q;
        }
        if q == 0 {
            idle += t - from;
        }
        Ok(idle)
    }

    /// CSV with `t,Q,W` followed by `Q_a@a,W_a@a,Z_a@a,tau@a` per cutoff.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
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

    /// Event log as JSON lines `{"t":..,"kind":..,"task":..}`.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        let events = self.events.as_ref().ok_or_else(|| io::Error::other(Error::EventLogMissing))?;
        for e in events {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}
