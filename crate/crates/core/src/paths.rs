//! Piecewise-linear càdlàg paths and the one-sided Skorokhod reflection map.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segment record as used in constructors and JSON output.
///
/// The jump occurs at `start`; the path is right-continuous there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start: f64,
    pub jump: f64,
    pub slope: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    initial_value: f64,
    horizon: f64,
    segments: Vec<SegmentSpec>,
}

/// A path on `[0, horizon]` that is linear between breakpoints and may jump
/// at breakpoints.
///
/// Only the last segment may have zero duration, which encodes a jump at the
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PathRecord", try_from = "PathRecord")]
pub struct PiecewiseLinearPath {
    starts: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    horizon: f64,
}

impl From<PiecewiseLinearPath> for PathRecord {
    fn from(p: PiecewiseLinearPath) -> Self {
        PathRecord { initial_value: p.values[0], horizon: p.horizon, segments: p.segments() }
    }
}

impl TryFrom<PathRecord> for PiecewiseLinearPath {
    type Error = Error;
    fn try_from(rec: PathRecord) -> Result<Self> {
        let p = PiecewiseLinearPath::new(rec.initial_value, &rec.segments)?;
        if (p.horizon - rec.horizon).abs() > 1e-9 * (1.0 + rec.horizon.abs()) {
            return Err(Error::InvalidPath(format!(
                "declared horizon {} but segments end at {}",
                rec.horizon, p.horizon
            )));
        }
        Ok(p)
    }
}

impl PiecewiseLinearPath {
    /// Builds a path from segment records whose durations tile `[0, horizon]`.
    pub fn new(initial_value: f64, segments: &[SegmentSpec]) -> Result<Self> {
        let Some(first) = segments.first() else {
            return Err(Error::InvalidPath("no segments".into()));
        };
        if first.start != 0.0 {
            return Err(Error::InvalidPath(format!("first segment starts at {}", first.start)));
        }
        if first.jump != 0.0 {
            return Err(Error::InvalidPath("first segment carries a jump".into()));
        }
        let n = segments.len();
        let mut starts = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        let mut value = initial_value;
        let mut expected = 0.0;
        for (k, s) in segments.iter().enumerate() {
            let finite = [s.start, s.jump, s.slope, s.duration].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidPath(format!("segment {k} has a non-finite field")));
            }
            let last = k + 1 == n;
            if s.duration < 0.0 || (s.duration == 0.0 && !last) {
                return Err(Error::InvalidPath(format!("segment {k} has duration {}", s.duration)));
            }
            if (s.start - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::InvalidPath(format!("segment {k} starts at {} but previous ends at {expected}", s.start)));
            }
            value += s.jump;
            starts.push(s.start);
            values.push(value);
            slopes.push(s.slope);
            value += s.slope * s.duration;
            expected = s.start + s.duration;
        }
        Ok(PiecewiseLinearPath { starts, values, slopes, horizon: expected })
    }

    /// The constant path `c` on `[0, horizon]`.
    pub fn constant(c: f64, horizon: f64) -> Result<Self> {
        let mut b = PathBuilder::new(c);
        b.extend_to(horizon, 0.0)?;
        b.finish()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn segments(&self) -> Vec<SegmentSpec> {
        (0..self.len())
            .map(|k| SegmentSpec {
                start: self.starts[k],
                jump: if k == 0 { 0.0 } else { self.values[k] - self.end_value(k - 1) },
                slope: self.slopes[k],
                duration: self.seg_end(k) - self.starts[k],
            })
            .collect()
    }

    /// Segment start times.
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts
    }

    /// True when every jump is nonnegative, as for netput paths.
    pub fn has_upward_jumps_only(&self) -> bool {
        (1..self.len()).all(|k| self.values[k] >= self.end_value(k - 1))
    }

    fn seg_end(&self, k: usize) -> f64 {
        self.starts.get(k + 1).copied().unwrap_or(self.horizon)
    }

    fn end_value(&self, k: usize) -> f64 {
        self.values[k] + self.slopes[k] * (self.seg_end(k) - self.starts[k])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfHorizon { t, horizon: self.horizon })
        }
    }

    fn eval(&self, k: usize, t: f64) -> f64 {
        self.values[k] + self.slopes[k] * (t - self.starts[k])
    }

    /// Right-continuous value at `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let k = self.starts.partition_point(|&s| s <= t) - 1;
        Ok(self.eval(k, t))
    }

    /// Left limit at `t` (the value itself at `t = 0`).
    pub fn left_limit(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(self.values[0]);
        }
        let k = self.starts.partition_point(|&s| s < t) - 1;
        Ok(self.eval(k, t))
    }

    /// Infimum of the path over `[0, horizon]`, including left limits.
    pub fn infimum(&self) -> f64 {
        (0..self.len()).map(|k| self.values[k].min(self.end_value(k))).fold(f64::INFINITY, f64::min)
    }

    /// Adds a constant to every value.
    pub fn offset(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    /// The path `t ↦ f(s + t)` on `[0, horizon − s]`.
    pub fn restrict_from(&self, s: f64) -> Result<Self> {
        self.check_time(s)?;
        let k0 = self.starts.partition_point(|&x| x <= s) - 1;
        let mut starts = vec![0.0];
        let mut values = vec![self.eval(k0, s)];
        let mut slopes = vec![self.slopes[k0]];
        for k in k0 + 1..self.len() {
            starts.push(self.starts[k] - s);
            values.push(self.values[k]);
            slopes.push(self.slopes[k]);
        }
        let horizon = self.horizon - s;
        // A zero-duration segment may only sit at the end.
        if starts.len() > 1 && starts[1] == 0.0 {
            starts.remove(0);
            values.remove(0);
            slopes.remove(0);
        }
        Ok(PiecewiseLinearPath { starts, values, slopes, horizon })
    }

    /// The reflected path `Γ[f](t) = f(t) − min(0, inf_{s≤t} f(s))`.
    ///
    /// Exact up to one rounding per breakpoint: where a decreasing segment
    /// reaches the running infimum a new breakpoint is inserted and the
    /// output is held at exactly zero afterwards.
    pub fn skorokhod_map(&self) -> Result<Self> {
        let f0 = self.values[0];
        if f0 < 0.0 {
            return Err(Error::NegativeInitialValue(f0));
        }
        let mut starts = Vec::with_capacity(self.len() + 4);
        let mut values = Vec::with_capacity(self.len() + 4);
        let mut slopes = Vec::with_capacity(self.len() + 4);
        let mut m = 0.0_f64;
        for k in 0..self.len() {
            let t0 = self.starts[k];
            let t1 = self.seg_end(k);
            let v0 = self.values[k];
            let slope = self.slopes[k];
            m = m.min(v0);
            let end = self.end_value(k);
            if slope >= 0.0 || end >= m || t1 == t0 {
                starts.push(t0);
                values.push(v0 - m);
                slopes.push(slope);
                m = m.min(end);
                continue;
            }
            let hit = t0 + (v0 - m) / -slope;
            if hit > t0 {
                starts.push(t0);
                values.push(v0 - m);
                slopes.push(slope);
            }
            if hit < t1 {
                starts.push(hit);
                values.push(0.0);
                slopes.push(0.0);
            }
            m = end;
        }
        Ok(PiecewiseLinearPath { starts, values, slopes, horizon: self.horizon })
    }

    /// Values at `0, dt, 2dt, …` and at the horizon.
    pub fn sample(&self, dt: f64) -> Result<Vec<(f64, f64)>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let t = k as f64 * dt;
            if t >= self.horizon {
                break;
            }
            out.push((t, self.value_at(t)?));
            k += 1;
        }
        out.push((self.horizon, self.value_at(self.horizon)?));
        Ok(out)
    }

    /// Writes `t,value` rows sampled every `dt`.
    pub fn write_csv<W: Write>(&self, mut w: W, dt: f64) -> io::Result<()> {
        let rows = self.sample(dt).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        writeln!(w, "t,value")?;
        for (t, v) in rows {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Incremental construction by absolute times.
///
/// ```
/// use srpt_ht::paths::PathBuilder;
/// let mut b = PathBuilder::new(0.0);
/// b.extend_to(1.0, -1.0).unwrap();
/// b.jump(2.0);
/// b.extend_to(3.0, -1.0).unwrap();
/// let p = b.finish().unwrap();
/// assert_eq!(p.value_at(1.0).unwrap(), 1.0);
/// ```
#[derive(Debug, Clone)]
pub struct PathBuilder {
    starts: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    time: f64,
    value: f64,
    pending_jump: f64,
}

impl PathBuilder {
    pub fn new(initial_value: f64) -> Self {
        PathBuilder {
            starts: Vec::new(),
            values: Vec::new(),
            slopes: Vec::new(),
            time: 0.0,
            value: initial_value,
            pending_jump: 0.0,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Schedules a jump at the current time.
    pub fn jump(&mut self, amount: f64) -> &mut Self {
        self.pending_jump += amount;
        self
    }

    /// Adds a linear piece from the current time to `t`. A no-op if `t`
    /// equals the current time.
    pub fn extend_to(&mut self, t: f64, slope: f64) -> Result<&mut Self> {
        if !(t >= self.time) || !t.is_finite() {
            return Err(Error::InvalidPath(format!("cannot extend from {} to {t}", self.time)));
        }
        if t == self.time {
            return Ok(self);
        }
        self.value += self.pending_jump;
        self.pending_jump = 0.0;
        self.starts.push(self.time);
        self.values.push(self.value);
        self.slopes.push(slope);
        self.value += slope * (t - self.time);
        self.time = t;
        Ok(self)
    }

    pub fn finish(mut self) -> Result<PiecewiseLinearPath> {
        if self.starts.is_empty() || self.pending_jump != 0.0 {
            self.value += self.pending_jump;
            self.starts.push(self.time);
            self.values.push(self.value);
            self.slopes.push(0.0);
        }
        let horizon = self.time;
        Ok(PiecewiseLinearPath { starts: self.starts, values: self.values, slopes: self.slopes, horizon })
    }
}

/// `sup_{0≤t≤T} |p1(t) − p2(t)|`, exact over the merged breakpoints.
pub fn sup_norm_diff(p1: &PiecewiseLinearPath, p2: &PiecewiseLinearPath, t_end: f64) -> Result<f64> {
    p1.check_time(t_end)?;
    p2.check_time(t_end)?;
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0_f64;
    let mut best = 0.0_f64;
    loop {
        while i + 1 < p1.len() && p1.starts[i + 1] <= t {
            i += 1;
        }
        while j + 1 < p2.len() && p2.starts[j + 1] <= t {
            j += 1;
        }
        best = best.max((p1.eval(i, t) - p2.eval(j, t)).abs());
        if t >= t_end {
            break;
        }
        let next = p1.seg_end(i).min(p2.seg_end(j)).min(t_end);
        // Left limits at the end of the shared linear piece.
        best = best.max((p1.eval(i, next) - p2.eval(j, next)).abs());
        t = next;
    }
    Ok(best)
}

/// Samples at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl GridPath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPath("grid path needs at least one value".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("grid dt must be positive, got {dt}")));
        }
        Ok(GridPath { t0, dt, values })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("nonempty grid")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{v}", self.time(k))?;
        }
        Ok(())
    }
}

/// Discrete reflection `W_k = X_k − min(0, min_{j≤k} X_j)`.
pub fn reflect_grid(g: &GridPath) -> Result<GridPath> {
    let mut values = g.values.clone();
    reflect_in_place(&mut values)?;
    Ok(GridPath { t0: g.t0, dt: g.dt, values })
}

pub(crate) fn reflect_in_place(values: &mut [f64]) -> Result<()> {
    let x0 = values.first().copied().unwrap_or(0.0);
    if x0 < 0.0 {
        return Err(Error::NegativeInitialValue(x0));
    }
    let mut m = 0.0_f64;
    for v in values.iter_mut() {
        m = m.min(*v);
        *v -= m;
    }
    Ok(())
}
