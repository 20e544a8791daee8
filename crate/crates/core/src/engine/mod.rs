//! Event-driven preemptive SRPT simulation.
//!
//! Rules: an arrival preempts only if its size is strictly smaller than the
//! remaining time in service; a completion and an arrival at the same instant
//! are processed completion first; equal remaining times are served in index
//! order. Snapshots at a given time are taken after all events at that time.

mod multiset;
mod primitives;
mod trajectory;

pub use multiset::{Task, TaskSet};
pub use primitives::{
    generate_primitives, interarrival_with_rate, InitialCondition, InterarrivalKind, PrimitiveStream,
};
pub use trajectory::{
    CutoffExtrema, CutoffSample, Event, EventKind, Extrema, MeasureSnapshot, Snapshot, Trajectory,
};

use crate::error::{Error, Result};
use crate::paths::{PathBuilder, PiecewiseLinearPath};

/// Engine options.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Discard tasks whose original size exceeds this value.
    pub truncation: Option<f64>,
    /// Unscaled cutoffs, sorted ascending.
    pub a_grid: Vec<f64>,
    pub snapshot_dt: f64,
    /// Weights `α` for which `sup |αQ − W|` is tracked.
    pub gap_weights: Vec<f64>,
    pub record_events: bool,
    pub record_measures: bool,
}

impl SimConfig {
    pub fn new(a_grid: Vec<f64>, snapshot_dt: f64) -> Self {
        SimConfig {
            truncation: None,
            a_grid,
            snapshot_dt,
            gap_weights: Vec::new(),
            record_events: false,
            record_measures: false,
        }
    }

    pub fn truncated(mut self, a: f64) -> Self {
        self.truncation = Some(a);
        self
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }

    pub fn with_measures(mut self) -> Self {
        self.record_measures = true;
        self
    }

    pub fn with_gap_weights(mut self, w: Vec<f64>) -> Self {
        self.gap_weights = w;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.snapshot_dt.is_finite() && self.snapshot_dt > 0.0) {
            return Err(Error::InvalidParameter(format!("snapshot_dt {}", self.snapshot_dt)));
        }
        if self.a_grid.windows(2).any(|w| !(w[0] < w[1])) || self.a_grid.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter("a_grid must be positive and strictly increasing".into()));
        }
        if let Some(a) = self.truncation {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!("truncation {a}")));
            }
        }
        Ok(())
    }
}

/// Tasks present at one instant: the one in service plus the waiting set.
#[derive(Debug, Clone, Default)]
pub struct QueueState {
    pub clock: f64,
    serving: Option<Task>,
    waiting: TaskSet,
}

impl QueueState {
    pub fn new(clock: f64) -> Self {
        QueueState { clock, serving: None, waiting: TaskSet::new() }
    }

    /// Adds a task under the SRPT preemption rule.
    pub fn admit(&mut self, task: Task) {
        match self.serving {
            None => self.serving = Some(task),
            Some(cur) if task.remaining < cur.remaining => {
                self.waiting.insert(cur);
                self.serving = Some(task);
            }
            Some(_) => self.waiting.insert(task),
        }
    }

    /// Loads tasks present at time zero, smallest `(remaining, index)` in service.
    pub fn from_tasks(clock: f64, tasks: &[Task]) -> Self {
        let mut s = QueueState::new(clock);
        for &t in tasks {
            s.waiting.insert(t);
        }
        s.serving = s.waiting.pop_min();
        s
    }

    pub fn serving(&self) -> Option<Task> {
        self.serving
    }

    pub fn q(&self) -> usize {
        self.waiting.len() + usize::from(self.serving.is_some())
    }

    pub fn w(&self) -> f64 {
        self.waiting.total() + self.serving.map_or(0.0, |t| t.remaining)
    }

    /// `(Q_a, W_a)`: tasks with remaining time in `[0, a]`.
    pub fn cutoff(&self, a: f64) -> (usize, f64) {
        let (c, s) = self.waiting.prefix(a);
        match self.serving {
            Some(t) if t.remaining <= a => (c + 1, s + t.remaining),
            _ => (c, s),
        }
    }
}

/// The state descriptor: a unit atom at each remaining time.
pub fn measure_snapshot(state: &QueueState) -> MeasureSnapshot {
    let mut atoms: Vec<f64> = state.serving.iter().map(|t| t.remaining).collect();
    atoms.extend(state.waiting.to_vec().into_iter().map(|t| t.remaining));
    atoms.retain(|&x| x > 0.0);
    MeasureSnapshot { t: state.clock, atoms }
}

#[derive(Debug, Clone)]
struct CutState {
    a: f64,
    zero: bool,
    positive_since: f64,
    w_at_positive: f64,
    ext: CutoffExtrema,
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    state: QueueState,
    cuts: Vec<CutState>,
    sup_q: usize,
    sup_w: f64,
    gaps: Vec<(f64, f64)>,
    w0: f64,
    v: f64,
    idle: f64,
    residual: f64,
    events: Option<Vec<Event>>,
}

impl Engine<'_> {
    fn t(&self) -> f64 {
        self.state.clock
    }

    fn observe(&mut self) {
        let q = self.state.q();
        let w = self.state.w();
        self.sup_q = self.sup_q.max(q);
        self.sup_w = self.sup_w.max(w);
        for g in &mut self.gaps {
            g.1 = g.1.max((g.0 * q as f64 - w).abs());
        }
        let t = self.state.clock;
        for k in 0..self.cuts.len() {
            let (qa, wa) = self.state.cutoff(self.cuts[k].a);
            let c = &mut self.cuts[k];
            c.ext.sup_q_a = c.ext.sup_q_a.max(qa);
            c.ext.sup_w_a = c.ext.sup_w_a.max(wa);
            // Exact zero when nothing sits above the cutoff.
            let above = if qa == q { 0.0 } else { w - wa };
            c.ext.sup_w_above = c.ext.sup_w_above.max(above);
            if wa == 0.0 {
                c.zero = true;
            } else if c.zero {
                c.zero = false;
                c.positive_since = t;
                c.w_at_positive = wa;
            }
        }
    }

    /// Moves the clock to `s` with no event in between. When `completing`,
    /// the task in service finishes exactly at `s`.
    fn advance(&mut self, s: f64, completing: bool) {
        let t = self.state.clock;
        let dt = s - t;
        if dt <= 0.0 {
            return;
        }
        match self.state.serving {
            None => self.idle += dt,
            Some(task) => {
                let q = self.state.q() as f64;
                let w_left = self.state.w() - dt;
                for g in &mut self.gaps {
                    g.1 = g.1.max((g.0 * q - w_left).abs());
                }
                let rem = if completing { 0.0 } else { task.remaining - dt };
                for k in 0..self.cuts.len() {
                    let a = self.cuts[k].a;
                    if task.remaining > a && rem <= a {
                        // The task in service enters [0, a] at t + remaining − a.
                        let (cnt, sum) = self.state.waiting.prefix(a);
                        let (qa, wa) = (cnt + 1, sum + a);
                        let c = &mut self.cuts[k];
                        c.ext.sup_q_a = c.ext.sup_q_a.max(qa);
                        c.ext.sup_w_a = c.ext.sup_w_a.max(wa);
                        if c.zero {
                            c.zero = false;
                            c.positive_since = t + (task.remaining - a);
                            c.w_at_positive = wa;
                        }
                    }
                }
                self.state.serving = Some(Task { remaining: rem, index: task.index });
            }
        }
        self.state.clock = s;
    }

    fn log(&mut self, kind: EventKind, task: i64) {
        let (q, w) = (self.state.q(), self.state.w());
        if let Some(ev) = self.events.as_mut() {
            ev.push(Event { t: self.state.clock, kind, task, q, w });
        }
    }

    fn check_conservation(&mut self) {
        let t = self.state.clock;
        let lhs = self.state.w();
        let rhs = self.w0 + self.v - t + self.idle;
        let scale = 1.0 + self.w0 + self.v + t;
        self.residual = self.residual.max((lhs - rhs).abs() / scale);
    }

    fn complete(&mut self, at: f64) {
        self.advance(at, true);
        let done = self.state.serving.take().expect("completion with a task in service");
        self.state.serving = self.state.waiting.pop_min();
        self.log(EventKind::Completion, done.index);
        self.observe();
        self.check_conservation();
    }

    fn arrive(&mut self, at: f64, index: i64, size: f64) {
        self.advance(at, false);
        if self.cfg.truncation.is_some_and(|a| size > a) {
            self.log(EventKind::TruncatedSkip, index);
            return;
        }
        self.v += size;
        self.state.admit(Task { remaining: size, index });
        self.log(EventKind::Arrival, index);
        self.observe();
        self.check_conservation();
    }

    fn snapshot(&self) -> Snapshot {
        let t = self.state.clock;
        let cutoffs = self
            .cuts
            .iter()
            .map(|c| {
                let (q_a, w_a) = self.state.cutoff(c.a);
                let (tau, w_a_at_tau) = if c.zero { (t, 0.0) } else { (c.positive_since, c.w_at_positive) };
                CutoffSample { a: c.a, q_a, w_a, z_a: None, y_a: None, tau, w_a_at_tau }
            })
            .collect();
        Snapshot { t, q: self.state.q(), w: self.state.w(), cutoffs }
    }
}

/// Snapshot times `k·dt` below the horizon, then the horizon itself.
pub fn snapshot_times(horizon: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if t >= horizon - 1e-9 * dt {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(horizon);
    out
}

/// Simulates one SRPT queue (optionally truncated) over `[0, horizon]`.
pub fn simulate(prims: &PrimitiveStream, cfg: &SimConfig) -> Result<Trajectory> {
    prims.validate()?;
    cfg.validate()?;
    let keep = |v: f64| cfg.truncation.is_none_or(|a| v <= a);
    let n0 = prims.initial_tasks.len() as i64;
    let mut events = cfg.record_events.then(Vec::new);
    let mut initial = Vec::new();
    for (k, &v) in prims.initial_tasks.iter().enumerate() {
        let index = k as i64 - n0 + 1;
        if keep(v) {
            initial.push(Task { remaining: v, index });
        } else if let Some(ev) = events.as_mut() {
            ev.push(Event { t: 0.0, kind: EventKind::TruncatedSkip, task: index, q: 0, w: 0.0 });
        }
    }
    let state = QueueState::from_tasks(0.0, &initial);
    let w0 = state.w();
    let initial_count = state.q();
    if let Some(ev) = events.as_mut() {
        for e in ev.iter_mut() {
            (e.q, e.w) = (initial_count, w0);
        }
    }
    let cuts = cfg
        .a_grid
        .iter()
        .map(|&a| {
            let (_, wa) = state.cutoff(a);
            CutState {
                a,
                zero: wa == 0.0,
                positive_since: 0.0,
                w_at_positive: wa,
                ext: CutoffExtrema { a, ..Default::default() },
            }
        })
        .collect();
    let mut eng = Engine {
        cfg,
        state,
        cuts,
        sup_q: 0,
        sup_w: 0.0,
        gaps: cfg.gap_weights.iter().map(|&g| (g, 0.0)).collect(),
        w0,
        v: 0.0,
        idle: 0.0,
        residual: 0.0,
        events,
    };
    eng.observe();

    let times = snapshot_times(prims.horizon, cfg.snapshot_dt);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut measures = cfg.record_measures.then(Vec::new);
    let mut next_arrival = 0usize;
    for &ts in &times {
        loop {
            let ta = prims.arrival_times.get(next_arrival).copied().unwrap_or(f64::INFINITY);
            let tc = eng.state.serving.map_or(f64::INFINITY, |t| eng.t() + t.remaining);
            if tc <= ta && tc <= ts {
                eng.complete(tc);
            } else if ta <= ts {
                eng.arrive(ta, next_arrival as i64 + 1, prims.sizes[next_arrival]);
                next_arrival += 1;
            } else {
                break;
            }
        }
        eng.advance(ts, false);
        snapshots.push(eng.snapshot());
        if let Some(m) = measures.as_mut() {
            m.push(measure_snapshot(&eng.state));
        }
    }

    Ok(Trajectory {
        horizon: prims.horizon,
        truncation: cfg.truncation,
        a_grid: cfg.a_grid.clone(),
        snapshots,
        extrema: Extrema {
            sup_q: eng.sup_q,
            sup_w: eng.sup_w,
            cutoffs: eng.cuts.iter().map(|c| c.ext.clone()).collect(),
            gaps: eng.gaps.clone(),
        },
        initial_count,
        initial_workload: w0,
        arrived_work: eng.v,
        idle_total: eng.idle,
        max_conservation_residual: eng.residual,
        final_measure: measure_snapshot(&eng.state),
        events: eng.events,
        measures,
    })
}

/// Full run plus one truncated run per cutoff on the same primitives;
/// fills `z_a` and `y_a` in every snapshot.
pub fn simulate_coupled(prims: &PrimitiveStream, cfg: &SimConfig) -> Result<Trajectory> {
    let mut full = simulate(prims, &SimConfig { truncation: None, ..cfg.clone() })?;
    for (i, &a) in cfg.a_grid.iter().enumerate() {
        let tcfg = SimConfig::new(Vec::new(), cfg.snapshot_dt).truncated(a);
        let tr = simulate(prims, &tcfg)?;
        for (s, ts) in full.snapshots.iter_mut().zip(&tr.snapshots) {
            s.cutoffs[i].z_a = Some(ts.q);
            s.cutoffs[i].y_a = Some(ts.w);
        }
    }
    Ok(full)
}

/// `X_a(t) = w0 + V_a(t) − t`, with jumps only for sizes at most `a`.
pub fn netput_path(prims: &PrimitiveStream, a: Option<f64>, w0: f64) -> Result<PiecewiseLinearPath> {
    let mut b = PathBuilder::new(w0);
    for (&u, &v) in prims.arrival_times.iter().zip(&prims.sizes) {
        if a.is_some_and(|a| v > a) {
            continue;
        }
        b.extend_to(u, -1.0)?;
        b.jump(v);
    }
    b.extend_to(prims.horizon, -1.0)?;
    b.finish()
}

/// `Γ[X_a]`: the workload for `a = None`, the truncated workload `Y_a` otherwise.
pub fn workload_from_reflection(prims: &PrimitiveStream, a: Option<f64>, w0: f64) -> Result<PiecewiseLinearPath> {
    netput_path(prims, a, w0)?.skorokhod_map()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand() -> PrimitiveStream {
        PrimitiveStream::new(vec![], vec![1.0, 2.5], vec![2.0, 0.5], 5.0).unwrap()
    }

    fn q_at(traj: &Trajectory, t: f64) -> usize {
        traj.snapshots.iter().find(|s| s.t == t).unwrap().q
    }

    #[test]
    fn empty_system() {
        let p = PrimitiveStream::new(vec![], vec![], vec![], 3.0).unwrap();
        let tr = simulate(&p, &SimConfig::new(vec![1.0], 0.5).with_events()).unwrap();
        assert!(tr.snapshots.iter().all(|s| s.q == 0 && s.w == 0.0));
        assert_eq!(tr.idle_time(2.0).unwrap(), 2.0);
        assert_eq!(tr.idle_total, 3.0);
    }

    #[test]
    fn hand_trace() {
        let tr = simulate(&hand(), &SimConfig::new(vec![1.0], 0.5).with_events()).unwrap();
        for (t, q) in [(0.0, 0), (0.5, 0), (1.0, 1), (2.0, 1), (2.5, 2), (3.0, 1), (3.5, 0), (4.0, 0)] {
            assert_eq!(q_at(&tr, t), q, "t={t}");
        }
        let s = tr.snapshots.iter().find(|s| s.t == 2.5).unwrap();
        assert_eq!(s.w, 1.0);
        assert_eq!((s.cutoffs[0].q_a, s.cutoffs[0].w_a), (2, 1.0));
        let ev = tr.events.as_ref().unwrap();
        let completions: Vec<(f64, i64)> =
            ev.iter().filter(|e| e.kind == EventKind::Completion).map(|e| (e.t, e.task)).collect();
        assert_eq!(completions, vec![(3.0, 1), (3.5, 2)]);
        assert_eq!(tr.idle_time(1.0).unwrap(), 1.0);
        assert_eq!(tr.idle_time(3.5).unwrap(), 1.0);
        assert_eq!(tr.idle_time(4.5).unwrap(), 2.0);
        assert_eq!(tr.extrema.sup_w, 2.0);
        assert_eq!(tr.extrema.sup_q, 2);
        assert!(tr.max_conservation_residual < 1e-15);
    }

    #[test]
    fn hand_trace_truncated() {
        let tr = simulate(&hand(), &SimConfig::new(vec![], 0.25).truncated(1.0).with_events()).unwrap();
        for s in &tr.snapshots {
            let expect = usize::from(s.t >= 2.5 && s.t < 3.0);
            assert_eq!(s.q, expect, "t={}", s.t);
        }
        let kinds: Vec<EventKind> = tr.events.unwrap().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::TruncatedSkip, EventKind::Arrival, EventKind::Completion]);
    }

    #[test]
    fn tau_tracking() {
        let tr = simulate(&hand(), &SimConfig::new(vec![1.0, 3.0], 0.5)).unwrap();
        let at = |t: f64| tr.snapshots.iter().find(|s| s.t == t).unwrap();
        // a = 1: the size-2 task enters [0, 1] at t = 2; the new one arrives at 2.5.
        assert_eq!(at(0.5).cutoffs[0].tau, 0.5);
        assert_eq!(at(1.5).cutoffs[0].tau, 1.5);
        assert_eq!(at(2.0).cutoffs[0].tau, 2.0);
        assert_eq!(at(3.0).cutoffs[0].tau, 2.0);
        assert_eq!(at(3.0).cutoffs[0].w_a_at_tau, 1.0);
        assert_eq!(at(4.0).cutoffs[0].tau, 4.0);
        // a = 3: positive from the first arrival.
        assert_eq!(at(2.5).cutoffs[1].tau, 1.0);
        assert_eq!(at(2.5).cutoffs[1].w_a_at_tau, 2.0);
        assert_eq!(tr.extrema.cutoffs[0].sup_w_a, 1.0);
        assert_eq!(tr.extrema.cutoffs[0].sup_w_above, 2.0);
    }

    #[test]
    fn gap_extrema_include_left_limits() {
        // One task of size 2 from t = 0: |3Q − W| is 1 at t = 0 and 3 just before 2.
        let p = PrimitiveStream::new(vec![2.0], vec![], vec![], 4.0).unwrap();
        let tr = simulate(&p, &SimConfig::new(vec![], 1.0).with_gap_weights(vec![3.0])).unwrap();
        assert_eq!(tr.extrema.gaps, vec![(3.0, 3.0)]);
    }

    #[test]
    fn coupled_fills_truncated_fields() {
        let tr = simulate_coupled(&hand(), &SimConfig::new(vec![1.0], 0.5)).unwrap();
        let s = tr.snapshots.iter().find(|s| s.t == 2.5).unwrap();
        assert_eq!(s.cutoffs[0].z_a, Some(1));
        assert_eq!(s.cutoffs[0].y_a, Some(0.5));
    }

    #[test]
    fn netput_examples() {
        let p = PrimitiveStream::new(vec![], vec![], vec![], 2.0).unwrap();
        let x = netput_path(&p, None, 0.0).unwrap();
        assert_eq!(x.value_at(2.0).unwrap(), -2.0);
        let x = netput_path(&hand(), None, 0.0).unwrap();
        assert_eq!(x.value_at(1.0).unwrap(), 1.0);
        assert_eq!(x.value_at(2.5).unwrap(), 0.0);
        let x1 = netput_path(&hand(), Some(1.0), 0.0).unwrap();
        assert_eq!(x1.breakpoints(), &[0.0, 2.5]);
        let w = workload_from_reflection(&p, None, 1.0).unwrap();
        assert_eq!(w.value_at(0.5).unwrap(), 0.5);
        assert_eq!(w.value_at(1.5).unwrap(), 0.0);
        let y = workload_from_reflection(&hand(), Some(1.0), 0.0).unwrap();
        assert_eq!(y.value_at(2.5).unwrap(), 0.5);
        assert_eq!(y.value_at(3.0).unwrap(), 0.0);
        let w = workload_from_reflection(&hand(), None, 0.0).unwrap();
        assert_eq!(w.value_at(1.0).unwrap(), 2.0);
    }

    #[test]
    fn measure_examples() {
        assert_eq!(measure_snapshot(&QueueState::new(0.0)).count(), 0);
        let tasks = [0.5, 0.5, 2.0].iter().enumerate().map(|(i, &r)| Task { remaining: r, index: i as i64 });
        let s = QueueState::from_tasks(0.0, &tasks.collect::<Vec<_>>());
        let m = measure_snapshot(&s);
        assert_eq!((m.count(), m.workload()), (3, 3.0));
        let tr = simulate(&hand(), &SimConfig::new(vec![1.0], 0.5).with_measures()).unwrap();
        let m = &tr.measures.unwrap()[5];
        assert_eq!(m.t, 2.5);
        assert_eq!(m.atoms, vec![0.5, 0.5]);
        assert_eq!(m.integrate(|x| if x <= 1.0 { x } else { 0.0 }), 1.0);
    }

    #[test]
    fn simultaneous_completion_and_arrival() {
        // Task 1 finishes at 2.0 exactly when task 2 arrives.
        let p = PrimitiveStream::new(vec![], vec![1.0, 2.0], vec![1.0, 3.0], 6.0).unwrap();
        let tr = simulate(&p, &SimConfig::new(vec![], 1.0).with_events()).unwrap();
        let ev = tr.events.unwrap();
        assert_eq!(ev[1].kind, EventKind::Completion);
        assert_eq!(ev[2].kind, EventKind::Arrival);
        assert_eq!(ev[1].q, 0);
    }

    #[test]
    fn csv_export() {
        let tr = simulate_coupled(&hand(), &SimConfig::new(vec![1.0], 1.0)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,Q,W,Q_a@1,W_a@1,Z_a@1,tau@1");
        assert_eq!(lines.next().unwrap(), "0,0,0,0,0,0,0");
        assert_eq!(lines.nth(2).unwrap(), "3,1,0.5,1,0.5,0,2");
    }

    #[test]
    fn snapshot_grid() {
        assert_eq!(snapshot_times(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(snapshot_times(1.0, 0.3), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }
}
