use super::grid::TimeGrid;
use crate::error::{LabError, Result};

/// A skipped stretch of a path: the sampler jumped from `values[index - 1]`
/// straight to `values[index]`, spending `duration` units of time in between
/// and reaching `depth` as the lowest point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub index: usize,
    pub duration: f64,
    pub depth: f64,
}

/// A touch of 0 by the bridge over step `index` between two points of one sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroTouch {
    pub index: usize,
    pub time: f64,
}

/// Discretized trajectory.
///
/// Within the grid horizon times are `k * dt`. Samplers for heavy-tailed
/// first-passage scenarios may continue past the grid with irregular steps; in
/// that case `times` holds the clock for every stored value and `step_dts`
/// the length of each step. Step lengths are kept separately because after a
/// long skipped stretch the absolute times are too large to difference.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    absorbed_at: Option<usize>,
    times: Option<Vec<f64>>,
    step_dts: Option<Vec<f64>>,
    gaps: Vec<Gap>,
    /// Supremum over each step `[k-1, k]` (entry 0 is the start value), when
    /// the sampler drew it from the Brownian bridge.
    step_max: Option<Vec<f64>>,
    /// Steps without a sign change whose bridge still touched 0, ascending.
    zero_touches: Vec<ZeroTouch>,
}

/// Sign change of `x - level` between two adjacent points, counting an exact
/// hit at the right end point. Starting exactly at the level is not a crossing.
#[inline]
pub fn crossed(prev: f64, cur: f64, level: f64) -> bool {
    let p = prev - level;
    let c = cur - level;
    (p < 0.0 && c >= 0.0) || (p > 0.0 && c <= 0.0)
}

impl SamplePath {
    /// Path on the uniform grid; `values.len()` must be `n_steps + 1`.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(LabError::Config(format!(
                "expected {} values, got {}",
                grid.n_steps() + 1,
                values.len()
            )));
        }
        Ok(SamplePath {
            grid,
            values,
            absorbed_at: None,
            times: None,
            step_dts: None,
            gaps: Vec::new(),
            step_max: None,
            zero_touches: Vec::new(),
        })
    }

    /// Uniform path of arbitrary length (>= 2 values) with step `dt`.
    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(LabError::Config("a path needs at least two values".into()));
        }
        let grid = TimeGrid::new(dt, values.len() - 1)?;
        SamplePath::from_values(grid, values)
    }

    pub(crate) fn assemble(
        grid: TimeGrid,
        values: Vec<f64>,
        absorbed_at: Option<usize>,
        clock: Option<(Vec<f64>, Vec<f64>)>,
        gaps: Vec<Gap>,
    ) -> Self {
        debug_assert!(clock
            .as_ref()
            .is_none_or(|(t, d)| t.len() == values.len() && d.len() == values.len()));
        let (times, step_dts) = clock.unzip();
        SamplePath {
            grid,
            values,
            absorbed_at,
            times,
            step_dts,
            gaps,
            step_max: None,
            zero_touches: Vec::new(),
        }
    }

    /// Attaches per-step suprema; `maxima[k]` must dominate both end points of step `k`.
    pub fn with_step_maxima(mut self, maxima: Vec<f64>) -> Result<Self> {
        if maxima.len() != self.values.len() {
            return Err(LabError::Config(format!(
                "expected {} step maxima, got {}",
                self.values.len(),
                maxima.len()
            )));
        }
        let v = &self.values;
        let ok = maxima[0] >= v[0] && (1..v.len()).all(|k| maxima[k] >= v[k - 1].max(v[k]));
        if !ok {
            return Err(LabError::Config("step maxima below the path".into()));
        }
        self.step_max = Some(maxima);
        Ok(self)
    }

    /// Records steps whose bridge touched 0 between two points of one sign.
    pub fn with_zero_touches(mut self, mut touches: Vec<ZeroTouch>) -> Result<Self> {
        touches.sort_by_key(|z| z.index);
        touches.dedup_by_key(|z| z.index);
        let inside = |z: &ZeroTouch| {
            z.index > 0
                && z.index < self.values.len()
                && z.time >= self.time(z.index - 1)
                && z.time <= self.time(z.index)
        };
        if !touches.iter().all(inside) {
            return Err(LabError::Config("zero touch outside the path".into()));
        }
        self.zero_touches = touches;
        Ok(self)
    }

    /// Marks the path absorbed at `index` and freezes all later values.
    pub fn absorb_at(mut self, index: usize) -> Self {
        if index < self.values.len() {
            let v = self.values[index];
            for x in &mut self.values[index + 1..] {
                *x = v;
            }
            if let Some(m) = &mut self.step_max {
                for x in &mut m[index + 1..] {
                    *x = v;
                }
            }
            self.absorbed_at = Some(index);
        }
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn absorbed_at(&self) -> Option<usize> {
        self.absorbed_at
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn has_irregular_clock(&self) -> bool {
        self.times.is_some()
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn time(&self, k: usize) -> f64 {
        match &self.times {
            Some(t) => t[k],
            None => self.grid.time(k),
        }
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.last_index())
    }

    /// Length of step `k` (from `k - 1` to `k`), `k >= 1`.
    pub fn step_dt(&self, k: usize) -> f64 {
        match &self.step_dts {
            Some(d) => d[k],
            None => self.grid.dt(),
        }
    }

    /// Whether step `k` is a skipped stretch rather than a Gaussian increment.
    pub fn is_gap(&self, k: usize) -> bool {
        self.gaps.binary_search_by_key(&k, |g| g.index).is_ok()
    }

    /// Last index whose time is <= `t` (clamped to the stored range).
    pub fn index_at(&self, t: f64) -> usize {
        match &self.times {
            None => ((t / self.grid.dt() + 1e-9).floor().max(0.0) as usize).min(self.last_index()),
            Some(ts) => ts.partition_point(|&s| s <= t + 1e-12).saturating_sub(1),
        }
    }

    /// Value at time `t`, taken at the last stored index not after `t`.
    /// Past the end of the path the last value is returned (frozen).
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    fn with_values(&self, values: Vec<f64>) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values,
            absorbed_at: self.absorbed_at,
            times: self.times.clone(),
            step_dts: self.step_dts.clone(),
            gaps: self.gaps.clone(),
            step_max: None,
            zero_touches: Vec::new(),
        }
    }

    /// Whether the sampler monitored the path between grid points (step
    /// suprema and touches of 0).
    pub fn bridge_monitored(&self) -> bool {
        self.step_max.is_some()
    }

    pub fn zero_touches(&self) -> &[ZeroTouch] {
        &self.zero_touches
    }

    /// Last touch of 0 without a sign change on a step `k <= upto`.
    pub fn last_zero_touch(&self, upto: usize) -> Option<ZeroTouch> {
        let n = self.zero_touches.partition_point(|z| z.index <= upto);
        n.checked_sub(1).map(|i| self.zero_touches[i])
    }

    pub fn step_maxima(&self) -> Option<&[f64]> {
        self.step_max.as_deref()
    }

    /// Supremum over step `k`; the larger end point when no bridge maxima are stored.
    pub fn step_max(&self, k: usize) -> f64 {
        match &self.step_max {
            Some(m) => m[k],
            None if k == 0 => self.values[0],
            None => self.values[k - 1].max(self.values[k]),
        }
    }

    /// Running maximum up to time `t_k`.
    pub fn max_through(&self, k: usize) -> f64 {
        (0..=k)
            .map(|j| self.step_max(j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the last step `k <= upto` attaining the maximum over `[0, t_upto]`.
    /// Without bridge maxima this is the last grid point setting or equalling
    /// the running maximum.
    pub fn last_max_index(&self, upto: usize) -> usize {
        let src = self.step_max.as_deref().unwrap_or(&self.values);
        let mut best = 0;
        let mut m = src[0];
        for (k, &x) in src.iter().enumerate().take(upto + 1).skip(1) {
            if x >= m {
                m = x;
                best = k;
            }
        }
        best
    }

    fn scan(&self, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        let mut acc = self.values[0];
        self.values
            .iter()
            .map(|&v| {
                acc = f(acc, v);
                acc
            })
            .collect()
    }

    /// Running maximum, through the bridge maxima when the path has them.
    pub fn running_max(&self) -> SamplePath {
        match &self.step_max {
            None => self.with_values(self.scan(f64::max)),
            Some(m) => {
                let mut acc = f64::NEG_INFINITY;
                self.with_values(
                    m.iter()
                        .map(|&x| {
                            acc = acc.max(x);
                            acc
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn running_min(&self) -> SamplePath {
        self.with_values(self.scan(f64::min))
    }

    pub fn positive_part(&self) -> SamplePath {
        self.with_values(self.values.iter().map(|&v| v.max(0.0)).collect())
    }

    /// Smallest index `k >= 1` where the path crosses `level` on `[k-1, k]`.
    pub fn first_hit(&self, level: f64) -> Option<usize> {
        (1..self.values.len()).find(|&k| crossed(self.values[k - 1], self.values[k], level))
    }

    /// First index `k >= 1` at which the path is at or below `level`,
    /// counting the minimum reached inside skipped stretches.
    pub fn first_at_or_below(&self, level: f64) -> Option<usize> {
        let mut gaps = self.gaps.iter().peekable();
        for k in 1..self.values.len() {
            if self.values[k] <= level {
                return Some(k);
            }
            while gaps.peek().is_some_and(|g| g.index < k) {
                gaps.next();
            }
            if gaps
                .peek()
                .is_some_and(|g| g.index == k && g.depth <= level)
            {
                return Some(k);
            }
        }
        None
    }

    /// Largest crossing index `k` of `level` with `k <= upto`.
    pub fn last_crossing(&self, level: f64, upto: usize) -> Option<usize> {
        let upto = upto.min(self.last_index());
        (1..=upto)
            .rev()
            .find(|&k| crossed(self.values[k - 1], self.values[k], level))
    }

    /// Linearly interpolated time at which the segment `[k-1, k]` meets `level`.
    pub fn crossing_time(&self, k: usize, level: f64) -> f64 {
        let (a, b) = (self.values[k - 1], self.values[k]);
        if a == b {
            return self.time(k);
        }
        let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
        self.time(k - 1) + frac * self.step_dt(k)
    }

    /// Crossing-count estimate of the local time at zero:
    /// `sqrt(pi * dt / 2)` per grid interval with a sign change.
    /// Skipped stretches contribute nothing.
    pub fn local_time_at_zero(&self) -> SamplePath {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.values.len() {
            if crossed(self.values[k - 1], self.values[k], 0.0) && !self.is_gap(k) {
                acc += (std::f64::consts::FRAC_PI_2 * self.step_dt(k)).sqrt();
            }
            out.push(acc);
        }
        self.with_values(out)
    }

    /// Tanaka-form local time `|B_t| - |B_0| - sum sgn(B_{k-1}) dB_k`.
    pub fn tanaka_local_time(&self) -> SamplePath {
        let v = &self.values;
        let mut out = Vec::with_capacity(v.len());
        let mut integral = 0.0;
        out.push(0.0);
        for k in 1..v.len() {
            let s = if v[k - 1] > 0.0 {
                1.0
            } else if v[k - 1] < 0.0 {
                -1.0
            } else {
                0.0
            };
            integral += s * (v[k] - v[k - 1]);
            out.push(v[k].abs() - v[0].abs() - integral);
        }
        self.with_values(out)
    }
}
