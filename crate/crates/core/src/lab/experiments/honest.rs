//! Honest-time laws and the deflator on the absorbed ensemble.

use super::{fold_paths, Accumulator, Ctx};
use crate::error::Result;
use crate::measure_change::deflator;
use crate::path_engine::{sample_absorbed, RngStream, SamplePath};
use crate::random_times::{detect, ScenarioId};
use crate::stat_tests::{
    mean_test, tolerance_test, weighted_ks, weighted_mean, DriftAccumulator, Reference, TestReport,
};

const TAG_E2: u64 = 2;
const TAG_E10: u64 = 10;

const DOOB_LEVELS: [f64; 3] = [1.5, 2.0, 3.0];
const DOOB_BINS: usize = 10;
const DOOB_MIN_COUNT: u64 = 100;
const DOOB_Z_LIMIT: f64 = 3.0;

const DEFLATOR_TOLERANCE: f64 = 0.01;

/// States with `N/N̄` above this are left out of the deflator regression:
/// their steps straddle the grid resolution of σ.
const NEAR_MAX_CUTOFF: f64 = 0.9;

const S3: ScenarioId = ScenarioId::S3StoppedMaxHonest;

/// Probability that the path rises above `x` after index `k`, given the grid
/// values: every step is a bridge, and one that ends at or above `x` counts
/// as a certain passage.
fn passage_probability(path: &SamplePath, k: usize, x: f64) -> f64 {
    let v = path.values();
    let mut miss = 1.0;
    for j in k + 1..v.len() {
        if v[j] >= x {
            return 1.0;
        }
        let e = 2.0 * (x - v[j - 1]) * (x - v[j]) / path.step_dt(j);
        miss *= 1.0 - (-e).exp();
    }
    1.0 - miss
}

struct E2Acc {
    log_nbar: Vec<f64>,
    inv_nbar: Vec<f64>,
    doob: Vec<DriftAccumulator>,
    censored: usize,
}

impl Accumulator for E2Acc {
    fn merge(&mut self, o: Self) {
        self.log_nbar.extend(o.log_nbar);
        self.inv_nbar.extend(o.inv_nbar);
        for (a, b) in self.doob.iter_mut().zip(&o.doob) {
            a.merge(b);
        }
        self.censored += o.censored;
    }
}

pub(crate) fn e2(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_E2);
    let t = cfg.t_grid[0];
    let init = || E2Acc {
        log_nbar: Vec::new(),
        inv_nbar: Vec::new(),
        doob: DOOB_LEVELS
            .iter()
            .map(|&x| DriftAccumulator::new(0.0, x, DOOB_BINS))
            .collect(),
        censored: 0,
    };
    let acc = fold_paths(cfg.n_paths, init, |acc, i| {
        let path = sample_absorbed(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(S3, &path)?;
        if tr.censored {
            acc.censored += 1;
            return Ok(());
        }
        let nbar = path.max_through(tr.sigma_index);
        acc.log_nbar.push(nbar.ln());
        acc.inv_nbar.push(1.0 / nbar);
        let k = path.index_at(t);
        let nt = path.values()[k];
        if nt > 0.0 {
            for (j, &x) in DOOB_LEVELS.iter().enumerate() {
                if nt < x {
                    acc.doob[j].add(nt, passage_probability(&path, k, x), 1.0, nt / x, 1.0);
                }
            }
        }
        Ok(())
    })?;
    ctx.tally(acc.censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(S3.code());
    let ks = weighted_ks(&acc.log_nbar, None, Reference::Exp1, cfg.ks_threshold)?;
    ctx.push(meta(ks.named("ks_exp_log_Nbar")));
    for (j, &x) in DOOB_LEVELS.iter().enumerate() {
        let rep = acc.doob[j]
            .finish_with(DOOB_MIN_COUNT, DOOB_Z_LIMIT)
            .to_report(format!("doob_maximal_identity_x{x}"));
        ctx.push(meta(rep.at(t)));
    }
    ctx.push(meta(deflator_mean_report(&acc.inv_nbar)?));
    Ok(())
}

fn deflator_mean_report(inv_nbar: &[f64]) -> Result<TestReport> {
    let m = weighted_mean(inv_nbar, None)?;
    Ok(
        tolerance_test(m.mean, 0.5, DEFLATOR_TOLERANCE, m.se, m.n_effective)
            .named("mean_inverse_Nbar"),
    )
}

struct E10Acc {
    inv_nbar: Vec<f64>,
    lhs: Vec<f64>,
    rhs: Vec<f64>,
    drift: DriftAccumulator,
    censored: usize,
}

impl Accumulator for E10Acc {
    fn merge(&mut self, o: Self) {
        self.inv_nbar.extend(o.inv_nbar);
        self.lhs.extend(o.lhs);
        self.rhs.extend(o.rhs);
        self.drift.merge(&o.drift);
        self.censored += o.censored;
    }
}

/// Deflator checks: `E[1/N̄_∞]`, the expectation identity at `T = 1` and
/// the martingale property of `1/N` before σ.
pub(crate) fn e10(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_E10);
    let horizon = 1.0;
    let init = || E10Acc {
        inv_nbar: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        drift: DriftAccumulator::standard(0.3, 3.0),
        censored: 0,
    };
    let acc = fold_paths(cfg.n_paths, init, |acc, i| {
        let path = sample_absorbed(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(S3, &path)?;
        if tr.censored {
            acc.censored += 1;
            return Ok(());
        }
        let d = deflator(&path, &tr)?;
        let v = path.values();
        let sigma = tr.sigma_index;
        let kt = path.index_at(horizon);
        let absorbed_by_horizon = path.absorbed_at().is_some_and(|a| path.time(a) <= horizon);
        acc.inv_nbar.push(d.terminal);
        acc.lhs.push(d.values[sigma.min(kt)]);
        acc.rhs
            .push(1.0 - if absorbed_by_horizon { d.terminal } else { 0.0 });
        let mut nbar = v[0];
        for k in 0..sigma.saturating_sub(1) {
            nbar = nbar.max(v[k]);
            if v[k] / nbar > NEAR_MAX_CUTOFF {
                continue;
            }
            acc.drift.add(
                v[k],
                d.values[k + 1] - d.values[k],
                path.step_dt(k + 1),
                0.0,
                1.0,
            );
        }
        Ok(())
    })?;
    ctx.tally(acc.censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(S3.code());
    ctx.push(meta(deflator_mean_report(&acc.inv_nbar)?));

    let l = weighted_mean(&acc.lhs, None)?;
    let r = weighted_mean(&acc.rhs, None)?;
    let se = l.se.hypot(r.se);
    let identity = TestReport::new(
        "deflator_identity",
        (l.mean - r.mean).abs(),
        se,
        3.0 * se,
        l.n_effective,
    )
    .detail(format!(
        "E[1/N_(sigma^T)]={:.6e} 1-E[1/Nbar; T0<=T]={:.6e}",
        l.mean, r.mean
    ))
    .at(horizon);
    ctx.push(meta(identity));
    let paired: Vec<f64> = acc.lhs.iter().zip(&acc.rhs).map(|(a, b)| a - b).collect();
    ctx.push(meta(
        mean_test(&paired, None, 0.0, 3.0)?
            .named("deflator_identity_paired")
            .exploratory()
            .at(horizon),
    ));
    ctx.push(meta(
        acc.drift.finish().to_report("deflator_drift_pre_sigma"),
    ));
    Ok(())
}
