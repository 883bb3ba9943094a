mod bridge;
mod counterexamples;
mod drifts;
mod honest;
mod invariance;
mod pseudo;

use super::artifact::RunArtifact;
use super::config::{ExperimentConfig, ExperimentId};
use crate::error::{LabError, Result};
use crate::measure_change::{GFn, Invariance, ProfileFn};
use crate::numerics::splitmix64;
use crate::path_engine::{map_reduce, RunConfig};
use crate::stat_tests::TestReport;
use std::sync::Arc;
use std::time::Instant;

/// Runs one experiment and collects its reports.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let start = Instant::now();
    let mut ctx = Ctx::new(cfg);
    match cfg.experiment {
        ExperimentId::E1 => pseudo::e1(&mut ctx)?,
        ExperimentId::E2 => honest::e2(&mut ctx)?,
        ExperimentId::E3 => drifts::e3(&mut ctx)?,
        ExperimentId::E4 => pseudo::e4(&mut ctx)?,
        ExperimentId::E5 => counterexamples::e5(&mut ctx)?,
        ExperimentId::E6 => invariance::e6(&mut ctx)?,
        ExperimentId::E7 => bridge::e7(&mut ctx)?,
        ExperimentId::E8 => drifts::e8(&mut ctx)?,
        ExperimentId::E9 => pseudo::e9(&mut ctx)?,
        ExperimentId::E10 => honest::e10(&mut ctx)?,
    }
    let runtime = if cfg.timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let censored_fraction = if ctx.simulated == 0 {
        0.0
    } else {
        ctx.censored as f64 / ctx.simulated as f64
    };
    Ok(RunArtifact::new(
        cfg.clone(),
        ctx.reports,
        censored_fraction,
        runtime,
    ))
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub reports: Vec<TestReport>,
    pub censored: usize,
    pub simulated: usize,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Ctx {
            cfg,
            reports: Vec::new(),
            censored: 0,
            simulated: 0,
        }
    }

    /// Master seed of the ensemble tagged `tag` within this experiment.
    pub fn seed(&self, tag: u64) -> u64 {
        splitmix64(self.cfg.master_seed ^ splitmix64(tag.wrapping_add(0x5eed)))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig::new(self.cfg.dt, self.cfg.window, self.cfg.horizon_cap)
    }

    pub fn push(&mut self, report: TestReport) {
        self.reports
            .push(report.experiment(self.cfg.experiment.code()));
    }

    pub fn tally(&mut self, censored: usize, simulated: usize) {
        self.censored += censored;
        self.simulated += simulated;
    }

    pub fn profile(&self) -> Result<ProfileFn> {
        Ok(ProfileFn::Named(self.cfg.f.parse()?))
    }

    pub fn invariance(&self) -> Result<Arc<Invariance>> {
        let g = match self.cfg.g.as_str() {
            "x_minus_c" => return Ok(Arc::new(Invariance::x_minus_c()?)),
            "zero" => GFn::Zero,
            other => {
                return Err(LabError::Config(format!(
                    "unknown g '{other}' (expected x_minus_c or zero)"
                )))
            }
        };
        Ok(Arc::new(Invariance::new(g)?))
    }
}

/// Per-worker state of an ensemble pass, merged in path order.
pub(crate) trait Accumulator: Send {
    fn merge(&mut self, other: Self);
}

/// Folds `n` paths into an accumulator, stopping at the first error.
pub(crate) fn fold_paths<A, I, F>(n: usize, init: I, f: F) -> Result<A>
where
    A: Accumulator,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) -> Result<()> + Sync + Send,
{
    let (acc, err) = map_reduce(
        n,
        || (init(), None::<LabError>),
        |(a, e): &mut (A, Option<LabError>), i| {
            if e.is_none() {
                if let Err(x) = f(a, i) {
                    *e = Some(x);
                }
            }
        },
        |(a, e), (b, eb)| {
            a.merge(b);
            if e.is_none() {
                *e = eb;
            }
        },
    );
    match err {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Report requiring at least `need` of the `outcomes` to pass; the statistic
/// is the number of failures.
pub(crate) fn count_report(name: &str, outcomes: &[bool], need: usize) -> TestReport {
    let failed = outcomes.iter().filter(|p| !**p).count();
    let allowed = outcomes.len().saturating_sub(need);
    TestReport::new(
        name,
        failed as f64,
        0.0,
        allowed as f64,
        outcomes.len() as f64,
    )
    .detail(format!(
        "{} of {} pass, need {}",
        outcomes.len() - failed,
        outcomes.len(),
        need
    ))
}

/// Share of passes required when a fixed `k`-of-`n` rule is scaled to `m` trials.
pub(crate) fn scaled_quota(k: usize, n: usize, m: usize) -> usize {
    (k * m).div_ceil(n)
}

impl<T: Send> Accumulator for Vec<T> {
    fn merge(&mut self, other: Self) {
        self.extend(other);
    }
}

/// Splits per-path outcomes into resolved records and a censored count.
pub(crate) fn resolved<T>(outcomes: Vec<Option<T>>) -> (Vec<T>, usize) {
    let n = outcomes.len();
    let kept: Vec<T> = outcomes.into_iter().flatten().collect();
    let censored = n - kept.len();
    (kept, censored)
}

/// Largest violation of the structural identities of a bundle: `Z = N D`
/// while `D > 0` and `N` is finite (once `D` underflows `N` is undefined), `Z` in `[0, 1]`,
/// `A` nondecreasing and `D` nonincreasing.
pub(crate) fn bundle_violation(b: &crate::azema::SupermartingaleBundle) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..b.len() {
        if b.d[k] > 0.0 && b.n[k].is_finite() {
            worst = worst.max((b.z[k] - b.n[k] * b.d[k]).abs());
        }
        worst = worst.max(-b.z[k]).max(b.z[k] - 1.0);
        if k > 0 {
            worst = worst.max(b.a[k - 1] - b.a[k]).max(b.d[k] - b.d[k - 1]);
        }
    }
    worst
}
