use super::grid::TimeGrid;
use super::path::{crossed, Gap, SamplePath, ZeroTouch};
use super::rng::RngStream;
use crate::error::{LabError, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Brownian motion with constant drift on a fixed grid.
///
/// With `absorb_at_zero` the path stops at the first zero crossing: the value
/// at that index is set to the interpolated crossing value 0 and kept.
pub fn sample_bm(
    grid: TimeGrid,
    stream: &RngStream,
    drift: f64,
    start: f64,
    absorb_at_zero: bool,
) -> SamplePath {
    let mut rng = stream.rng();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let n = grid.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    values.push(start);
    let mut x = start;
    let mut absorbed = None;
    for k in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        let next = x + drift * dt + sd * z;
        if absorb_at_zero && crossed(x, next, 0.0) {
            values.push(0.0);
            absorbed = Some(k);
            values.resize(n + 1, 0.0);
            break;
        }
        x = next;
        values.push(x);
    }
    SamplePath::assemble(grid, values, absorbed, None, Vec::new())
}

/// Settings for the open-ended first-passage samplers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dt: f64,
    pub drift: f64,
    /// Length of the leading stretch simulated on the plain uniform grid.
    pub window: f64,
    /// Simulation budget before the one-off 4x extension.
    pub horizon_cap: f64,
    /// Skip or rescale the heavy tail after the window (driftless runs only).
    pub accelerate: bool,
    /// Draw each step's supremum from the Brownian bridge, so running maxima
    /// and the passage at 1 are exact rather than read off the grid.
    pub bridge: bool,
}

impl RunConfig {
    pub fn new(dt: f64, window: f64, horizon_cap: f64) -> Self {
        RunConfig {
            dt,
            drift: 0.0,
            window,
            horizon_cap,
            accelerate: true,
            bridge: true,
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn exact(mut self) -> Self {
        self.accelerate = false;
        self
    }

    /// Plain grid values only, for discretization studies.
    pub fn grid_only(mut self) -> Self {
        self.bridge = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.dt) || !ok(self.window) || !ok(self.horizon_cap) || !self.drift.is_finite() {
            return Err(LabError::Config(format!("invalid run settings {self:?}")));
        }
        Ok(())
    }

    fn window_grid(&self) -> Result<TimeGrid> {
        TimeGrid::covering(self.dt, self.window)
    }

    fn budget_steps(&self, extended: bool) -> usize {
        let cap = if extended {
            4.0 * self.horizon_cap
        } else {
            self.horizon_cap
        };
        (cap / self.dt).ceil() as usize
    }
}

/// Supremum of a Brownian bridge from `x` to `y` over time `h` with
/// variance rate 1, by inversion of `P(max > m) = exp(-2 (m - x)(m - y) / h)`.
fn bridge_max(x: f64, y: f64, h: f64, u: f64) -> f64 {
    let d = y - x;
    0.5 * (x + y + (d * d - 2.0 * h * u.ln()).sqrt())
}

/// Lazily materialized irregular clock.
struct Clock {
    dt: f64,
    /// Times and step lengths, both indexed like the values.
    times: Option<(Vec<f64>, Vec<f64>)>,
    now: f64,
}

impl Clock {
    fn push(&mut self, len_before: usize, step: f64, regular: bool) {
        if !regular && self.times.is_none() {
            let t = (0..len_before).map(|k| k as f64 * self.dt).collect();
            let mut d = vec![self.dt; len_before];
            d[0] = 0.0;
            self.times = Some((t, d));
        }
        self.now += step;
        if let Some((t, d)) = &mut self.times {
            t.push(self.now);
            d.push(step);
        }
    }

    fn is_regular(&self) -> bool {
        self.times.is_none()
    }
}

/// Path from 0 until the first passage at level 1.
///
/// The first `window` time units use the uniform grid. Afterwards, when
/// accelerated, each time the path dips below zero the negative excursion is
/// replaced by its exact law: the return time to zero from `x < 0` is
/// `x^2 / G^2` for a standard normal `G`, the path restarts at 0, and the
/// excursion minimum is drawn as `x / U`. Such steps are recorded as [`Gap`]s.
/// The simulation budget counts Gaussian steps only; if it runs out the budget
/// is extended 4x once, and a path that still has not reached 1 is returned
/// unresolved.
///
/// With `cfg.bridge` each Gaussian step also draws its bridge supremum and
/// whether it touched 0 between two points of one sign; a step whose
/// supremum reaches 1 ends the path with the value 1.
pub fn sample_to_level_one(cfg: &RunConfig, stream: &RngStream) -> Result<SamplePath> {
    cfg.validate()?;
    let grid = cfg.window_grid()?;
    let mut rng = stream.rng();
    let dt = cfg.dt;
    let sd = dt.sqrt();
    let skip = cfg.accelerate && cfg.drift == 0.0;
    let window_steps = grid.n_steps();
    let mut values = Vec::with_capacity(window_steps + 1);
    values.push(0.0);
    let mut clock = Clock {
        dt,
        times: None,
        now: 0.0,
    };
    let mut gaps = Vec::new();
    let mut maxima = cfg.bridge.then(|| vec![0.0]);
    let mut touches = Vec::new();
    let mut x = 0.0f64;
    let mut steps = 0usize;
    let mut budget = cfg.budget_steps(false);
    let mut extended = false;
    loop {
        if steps >= budget {
            if extended {
                break;
            }
            extended = true;
            budget = cfg.budget_steps(true);
        }
        let z: f64 = rng.sample(StandardNormal);
        let next = x + cfg.drift * dt + sd * z;
        steps += 1;
        let len = values.len();
        clock.push(len, dt, true);
        if let Some(m) = &mut maxima {
            let top = bridge_max(x, next, dt, 1.0 - rng.random::<f64>());
            if top >= 1.0 && next < 1.0 {
                // touched 1 inside the step: the path ends there
                values.push(1.0);
                m.push(1.0);
                break;
            }
            m.push(top);
            let e = 2.0 * x * next / dt;
            if e > 0.0 && e < BRIDGE_EXPONENT_CUTOFF {
                let (p, u) = ((-e).exp(), rng.random::<f64>());
                if u < p {
                    // u / p is uniform given the touch; it spreads touch
                    // times over the step instead of stacking them on a grid
                    touches.push(ZeroTouch {
                        index: len,
                        time: clock.now - dt * (1.0 - u / p),
                    });
                }
            }
        }
        values.push(next);
        x = next;
        if crossed(values[len - 1], next, 1.0) {
            break;
        }
        if skip && x < 0.0 && len >= window_steps {
            let g: f64 = rng.sample(StandardNormal);
            let u: f64 = 1.0 - rng.random::<f64>();
            let duration = x * x / (g * g).max(f64::MIN_POSITIVE);
            let depth = x / u;
            let idx = values.len();
            clock.push(idx, duration, false);
            values.push(0.0);
            if let Some(m) = &mut maxima {
                m.push(0.0);
            }
            gaps.push(Gap {
                index: idx,
                duration,
                depth,
            });
            x = 0.0;
        }
    }
    let path = SamplePath::assemble(grid, values, None, clock.times, gaps);
    match maxima {
        Some(m) => path.with_step_maxima(m)?.with_zero_touches(touches),
        None => Ok(path),
    }
}

/// Two resolutions of one path from 0 to level 1: the fine path takes steps
/// of `cfg.dt / factor`, the coarse path keeps every `factor`-th point.
///
/// Negative excursions are skipped (as in [`sample_to_level_one`]) only at
/// coarse points, so both paths share every skipped stretch. The fine path
/// stops recording at its own first passage; the coarse path continues to
/// its first passage on coarse points. Both are plain grid paths whatever
/// `cfg.bridge` says.
pub fn sample_to_level_one_coupled(
    cfg: &RunConfig,
    stream: &RngStream,
    factor: usize,
) -> Result<(SamplePath, SamplePath)> {
    cfg.validate()?;
    if factor == 0 {
        return Err(LabError::Config(
            "refinement factor must be positive".into(),
        ));
    }
    let grid = cfg.window_grid()?;
    let fine_dt = cfg.dt / factor as f64;
    let fine_grid = TimeGrid::new(fine_dt, grid.n_steps() * factor)?;
    let mut rng = stream.rng();
    let sd = fine_dt.sqrt();
    let skip = cfg.accelerate && cfg.drift == 0.0;
    let window_steps = grid.n_steps();
    let mut coarse = vec![0.0];
    let mut fine = vec![0.0];
    let mut coarse_clock = Clock {
        dt: cfg.dt,
        times: None,
        now: 0.0,
    };
    let mut fine_clock = Clock {
        dt: fine_dt,
        times: None,
        now: 0.0,
    };
    let mut coarse_gaps = Vec::new();
    let mut fine_gaps = Vec::new();
    let mut fine_done = false;
    let mut x = 0.0f64;
    let mut blocks = 0usize;
    let mut budget = cfg.budget_steps(false);
    let mut extended = false;
    loop {
        if blocks >= budget {
            if extended {
                break;
            }
            extended = true;
            budget = cfg.budget_steps(true);
        }
        blocks += 1;
        for _ in 0..factor {
            let z: f64 = rng.sample(StandardNormal);
            let next = x + cfg.drift * fine_dt + sd * z;
            if !fine_done {
                fine_clock.push(fine.len(), fine_dt, true);
                fine.push(next);
                fine_done = crossed(x, next, 1.0);
            }
            x = next;
        }
        let prev = *coarse.last().unwrap_or(&0.0);
        coarse_clock.push(coarse.len(), cfg.dt, true);
        coarse.push(x);
        if crossed(prev, x, 1.0) {
            break;
        }
        if skip && x < 0.0 && coarse.len() > window_steps {
            let g: f64 = rng.sample(StandardNormal);
            let u: f64 = 1.0 - rng.random::<f64>();
            let duration = x * x / (g * g).max(f64::MIN_POSITIVE);
            let depth = x / u;
            let ci = coarse.len();
            coarse_clock.push(ci, duration, false);
            coarse.push(0.0);
            coarse_gaps.push(Gap {
                index: ci,
                duration,
                depth,
            });
            if !fine_done {
                let fi = fine.len();
                fine_clock.push(fi, duration, false);
                fine.push(0.0);
                fine_gaps.push(Gap {
                    index: fi,
                    duration,
                    depth,
                });
            }
            x = 0.0;
        }
    }
    Ok((
        SamplePath::assemble(grid, coarse, None, coarse_clock.times, coarse_gaps),
        SamplePath::assemble(fine_grid, fine, None, fine_clock.times, fine_gaps),
    ))
}

/// Beyond this exponent a bridge touch of 0 is not worth a uniform draw.
const BRIDGE_EXPONENT_CUTOFF: f64 = 40.0;

/// Path from 1 absorbed at its first passage at 0, monitored continuously
/// through the bridge between grid points.
///
/// After the window, when accelerated, the step length is `dt * M^2` where `M`
/// is the running maximum, so every step has the same size relative to the
/// current scale of the path. The budget is measured on the rescaled clock
/// (one unit per `dt` of rescaled time), with the same one-off 4x extension.
pub fn sample_absorbed(cfg: &RunConfig, stream: &RngStream) -> Result<SamplePath> {
    cfg.validate()?;
    let grid = cfg.window_grid()?;
    let mut rng = stream.rng();
    let dt = cfg.dt;
    let window_steps = grid.n_steps();
    let scale = cfg.accelerate && cfg.drift == 0.0;
    let mut values = Vec::with_capacity(window_steps + 1);
    values.push(1.0);
    let mut clock = Clock {
        dt,
        times: None,
        now: 0.0,
    };
    let mut x = 1.0f64;
    let mut running_max = 1.0f64;
    let mut maxima = vec![1.0];
    let mut steps = 0usize;
    let mut budget = cfg.budget_steps(false);
    let mut extended = false;
    let mut absorbed = None;
    loop {
        if steps >= budget {
            if extended {
                break;
            }
            extended = true;
            budget = cfg.budget_steps(true);
        }
        let len = values.len();
        let h = if scale && len > window_steps {
            dt * running_max * running_max
        } else {
            dt
        };
        let z: f64 = rng.sample(StandardNormal);
        let next = x + cfg.drift * h + h.sqrt() * z;
        steps += 1;
        clock.push(len, h, h == dt && clock.is_regular());
        // a bridge between two positive points still touches 0 with
        // probability exp(-2 x y / h); only drawn when it is not negligible
        let e = 2.0 * x * next / h;
        let touched = e > 0.0 && e < BRIDGE_EXPONENT_CUTOFF && rng.random::<f64>() < (-e).exp();
        // the supremum is drawn from the unconditioned bridge; its dependence
        // on the touch of 0 matters only for steps that start near 0
        let top = if cfg.bridge {
            bridge_max(x, next, h, 1.0 - rng.random::<f64>())
        } else {
            x.max(next)
        };
        if touched || crossed(x, next, 0.0) {
            values.push(0.0);
            maxima.push(top.max(x));
            absorbed = Some(len);
            break;
        }
        values.push(next);
        maxima.push(top);
        x = next;
        running_max = running_max.max(top);
    }
    let path = SamplePath::assemble(grid, values, absorbed, clock.times, Vec::new());
    if cfg.bridge {
        path.with_step_maxima(maxima)
    } else {
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bm_is_deterministic_and_starts_at_start() {
        let g = TimeGrid::new(1e-2, 100).unwrap();
        let s = RngStream::new(11, 5);
        let a = sample_bm(g, &s, 0.0, 0.3, false);
        let b = sample_bm(g, &s, 0.0, 0.3, false);
        assert_eq!(a, b);
        assert_eq!(a.values()[0], 0.3);
        assert_eq!(a.len(), 101);
    }

    #[test]
    fn absorbed_bm_freezes_at_zero() {
        let g = TimeGrid::new(1e-2, 10_000).unwrap();
        let p = (0..50)
            .map(|i| sample_bm(g, &RngStream::new(3, i), 0.0, 0.2, true))
            .find(|p| p.absorbed_at().is_some())
            .expect("some path absorbs");
        let k = p.absorbed_at().unwrap();
        assert!(p.values()[k..].iter().all(|&v| v == 0.0));
        assert!(p.values()[..k].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn level_one_run_ends_at_first_passage() {
        let cfg = RunConfig::new(1e-3, 1.0, 50.0);
        for i in 0..20 {
            let p = sample_to_level_one(&cfg, &RngStream::new(9, i)).unwrap();
            let hit = p.first_hit(1.0);
            if let Some(k) = hit {
                assert_eq!(k, p.last_index());
            }
            for g in p.gaps() {
                assert_eq!(p.values()[g.index], 0.0);
                assert!(p.values()[g.index - 1] < 0.0);
                assert!(g.depth <= p.values()[g.index - 1]);
                assert!(p.time(g.index) > p.time(g.index - 1));
            }
        }
    }

    #[test]
    fn absorbed_run_is_positive_until_zero() {
        let cfg = RunConfig::new(1e-3, 1.0, 50.0);
        for i in 0..20 {
            let p = sample_absorbed(&cfg, &RngStream::new(4, i)).unwrap();
            let end = p.absorbed_at().unwrap_or(p.last_index());
            assert!(p.values()[..end].iter().all(|&v| v > 0.0));
            for k in 1..p.len() {
                assert!(p.time(k) > p.time(k - 1));
            }
            assert!((p.time(500) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_paths_share_coarse_points() {
        let cfg = RunConfig::new(1e-3, 1.0, 50.0);
        for i in 0..10 {
            let (c, f) = sample_to_level_one_coupled(&cfg, &RngStream::new(12, i), 4).unwrap();
            assert!(c.first_hit(1.0).is_some());
            assert!(f.first_hit(1.0).is_some());
            // inside the window, coarse point k is fine point 4k
            let upto = 1000.min(c.last_index()).min(f.last_index() / 4);
            for k in 0..=upto {
                assert_eq!(c.values()[k], f.values()[4 * k]);
            }
            assert!(f.end_time() <= c.end_time() + 1e-12);
        }
    }

    #[test]
    fn bridge_max_median_of_unit_bridge() {
        // P(max > m) = exp(-2 m^2) for the bridge from 0 to 0 over time 1
        let m = bridge_max(0.0, 0.0, 1.0, 0.5);
        assert!((m - (std::f64::consts::LN_2 / 2.0).sqrt()).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn bridge_max_dominates_end_points(x in -3.0f64..3.0, y in -3.0f64..3.0, h in 1e-6f64..2.0, u in 1e-12f64..1.0) {
            proptest::prop_assert!(bridge_max(x, y, h, u) >= x.max(y));
        }
    }

    /// Fraction of paths reaching 1 by time 1 against `P(max_[0,1] B >= 1) = erfc(1/sqrt 2)`.
    fn passage_by_one(cfg: &RunConfig, n: u64) -> f64 {
        let hits = (0..n)
            .filter(|&i| {
                let p = sample_to_level_one(cfg, &RngStream::new(21, i)).unwrap();
                p.first_hit(1.0).is_some_and(|k| p.time(k) <= 1.0 + 1e-9)
            })
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn bridge_monitoring_removes_passage_bias() {
        let n = 20_000;
        let exact = libm::erfc(std::f64::consts::FRAC_1_SQRT_2);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        let cfg = RunConfig::new(1e-2, 1.0, 1.0);
        let bridged = passage_by_one(&cfg, n);
        let grid = passage_by_one(&cfg.grid_only(), n);
        assert!((bridged - exact).abs() < 4.0 * se, "{bridged} vs {exact}");
        assert!(exact - grid > 0.01, "grid {grid} vs {exact}");
    }

    #[test]
    fn zero_touches_sit_inside_one_signed_steps() {
        let cfg = RunConfig::new(1e-2, 1.0, 20.0);
        let mut seen = 0;
        for i in 0..50 {
            let p = sample_to_level_one(&cfg, &RngStream::new(5, i)).unwrap();
            assert!(p.bridge_monitored());
            let v = p.values();
            for z in p.zero_touches() {
                assert!(v[z.index - 1] * v[z.index] > 0.0);
                assert!(z.time > p.time(z.index - 1) && z.time <= p.time(z.index));
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn rejects_bad_run_settings() {
        let cfg = RunConfig::new(0.0, 1.0, 50.0);
        assert!(sample_to_level_one(&cfg, &RngStream::new(1, 1)).is_err());
    }
}
