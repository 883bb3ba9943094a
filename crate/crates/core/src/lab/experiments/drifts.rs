//! Drift regressions before and after σ for the last-zero times.

use super::{bundle_violation, fold_paths, indicator, Accumulator, Ctx};
use crate::azema::closed_form_bundle;
use crate::error::Result;
use crate::measure_change::{
    predicted_drift, weight, DriftState, MeasureChangeSpec, NamedFn, ProfileFn, Regime,
};
use crate::path_engine::{sample_bm, sample_to_level_one, RngStream, TimeGrid};
use crate::random_times::{aux, avoidance_check, bridge_resolved, detect, ScenarioId};
use crate::stat_tests::{martingale_orthogonality, mean_test, DriftAccumulator, TestReport};

const TAG_E3: u64 = 3;
const TAG_E8: u64 = 8;

/// Substream of a path used to place σ between grid points.
const BRIDGE_SUBSTREAM: u64 = 1;

/// Bundle identities must hold to rounding.
const STRUCTURE_TOL: f64 = 1e-9;

struct E3Acc {
    pre_one: DriftAccumulator,
    pre_f: DriftAccumulator,
    post: DriftAccumulator,
    post_flipped: DriftAccumulator,
    sigma_times: Vec<f64>,
    /// Per path: `m_t - m_s`, `B_{t∧σ} - B_{s∧σ}`, `B_s`, `B̄_s`, `1{σ>s}`.
    orth: Vec<[f64; 5]>,
    violation: f64,
    censored: usize,
}

impl Accumulator for E3Acc {
    fn merge(&mut self, o: Self) {
        self.pre_one.merge(&o.pre_one);
        self.pre_f.merge(&o.pre_f);
        self.post.merge(&o.post);
        self.post_flipped.merge(&o.post_flipped);
        self.sigma_times.extend(o.sigma_times);
        self.orth.extend(o.orth);
        self.violation = self.violation.max(o.violation);
        self.censored += o.censored;
    }
}

pub(crate) fn e3(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s1 = ScenarioId::S1ExcursionHonest;
    let one = MeasureChangeSpec::GeneralizedPi(ProfileFn::Named(NamedFn::One)).checked()?;
    let spec_f = MeasureChangeSpec::GeneralizedPi(ctx.profile()?).checked()?;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_E3);
    let (s, t) = (cfg.t_grid[0].min(1.0), 1.0);
    let (lo, hi) = (0.1, 0.9);
    let init = || E3Acc {
        pre_one: DriftAccumulator::standard(lo, hi),
        pre_f: DriftAccumulator::standard(lo, hi),
        post: DriftAccumulator::standard(lo, hi),
        post_flipped: DriftAccumulator::standard(lo, hi),
        sigma_times: Vec::new(),
        orth: Vec::new(),
        violation: 0.0,
        censored: 0,
    };
    let acc = fold_paths(cfg.n_paths, init, |acc, i| {
        let stream = RngStream::new(seed, i as u64);
        let path = sample_to_level_one(&rc, &stream)?;
        let tr = detect(s1, &path)?;
        if tr.censored {
            acc.censored += 1;
            return Ok(());
        }
        let v = path.values();
        let sigma = bridge_resolved(&path, &tr, &stream.substream(BRIDGE_SUBSTREAM))?.sigma_index;
        let t1 = tr.aux_index(aux::T1).expect("resolved first passage");
        let rho_f = weight(&spec_f, s1, &path, &tr)?;
        let mut bbar = path.step_max(0);
        for k in 0..t1 {
            bbar = bbar.max(path.step_max(k));
            let x = v[k];
            if path.is_gap(k + 1) || !(x >= lo && x < hi) {
                continue;
            }
            let dx = v[k + 1] - x;
            let dt = path.step_dt(k + 1);
            let tk = path.time(k);
            if k + 1 < sigma {
                let st = DriftState::new(tk, x, bbar, Regime::PreSigma);
                acc.pre_one
                    .add(x, dx, dt, predicted_drift(&one, s1, st)?, 1.0);
                acc.pre_f
                    .add(x, dx, dt, predicted_drift(&spec_f, s1, st)?, rho_f);
            } else if k >= sigma {
                let up =
                    predicted_drift(&one, s1, DriftState::new(tk, x, bbar, Regime::PostSigma))?;
                acc.post.add(x, dx, dt, up, 1.0);
                acc.post_flipped.add(x, dx, dt, -up, 1.0);
            }
        }
        acc.sigma_times.push(tr.sigma_time);
        let b = closed_form_bundle(s1, &path, &tr)?;
        acc.violation = acc.violation.max(bundle_violation(&b));
        let (ks, kt) = (path.index_at(s), path.index_at(t));
        acc.orth.push([
            b.m[kt] - b.m[ks],
            v[kt.min(sigma)] - v[ks.min(sigma)],
            v[ks],
            path.max_through(ks),
            indicator(tr.sigma_time > s),
        ]);
        Ok(())
    })?;
    ctx.tally(acc.censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s1.code());
    ctx.push(meta(
        acc.pre_one
            .finish()
            .to_report("drift_pre_sigma")
            .spec(one.name()),
    ));
    ctx.push(meta(
        acc.pre_f
            .finish()
            .to_report("drift_pre_sigma")
            .spec(spec_f.name()),
    ));
    ctx.push(meta(
        acc.post.finish().to_report("drift_post_sigma_plus_inv_B"),
    ));
    ctx.push(meta(
        acc.post_flipped
            .finish()
            .to_report("drift_post_sigma_minus_inv_B")
            .diagnostic(),
    ));

    ctx.push(meta(TestReport::new(
        "bundle_structure",
        acc.violation,
        0.0,
        STRUCTURE_TOL,
        acc.sigma_times.len() as f64,
    )));
    let col = |j: usize| -> Vec<f64> { acc.orth.iter().map(|r| r[j]).collect() };
    let dm = col(0);
    for (name, g) in [
        ("one", vec![1.0; dm.len()]),
        ("B_s", col(2)),
        ("Bbar_s", col(3)),
    ] {
        ctx.push(meta(
            martingale_orthogonality(&dm, &g, None, 3.0)?
                .named(format!("m_orthogonality_{name}"))
                .at(s),
        ));
    }
    let stopped = martingale_orthogonality(&col(1), &col(4), None, 3.0)?
        .named("stopped_B_orthogonal_to_sigma_after_s")
        .diagnostic()
        .at(s);
    ctx.push(meta(stopped));

    ctx.push(avoidance_check(s1, &acc.sigma_times)?);
    let fixture = vec![0.5; acc.sigma_times.len().max(100)];
    ctx.push(
        avoidance_check(s1, &fixture)?
            .named("avoidance_atom_fixture")
            .diagnostic(),
    );
    Ok(())
}

struct E8Acc {
    pre: DriftAccumulator,
    post: DriftAccumulator,
    post_flipped: DriftAccumulator,
    rho: Vec<f64>,
    sigma_times: Vec<f64>,
}

impl Accumulator for E8Acc {
    fn merge(&mut self, o: Self) {
        self.pre.merge(&o.pre);
        self.post.merge(&o.post);
        self.post_flipped.merge(&o.post_flipped);
        self.rho.extend(o.rho);
        self.sigma_times.extend(o.sigma_times);
    }
}

/// Last zero before time 1 under `ρ = |B_1|/sqrt(2/π)`. States are folded
/// onto `|B|` with increments and predictions multiplied by the sign of `B`.
pub(crate) fn e8(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s7 = ScenarioId::S7LastZeroUnit;
    let spec = MeasureChangeSpec::AbsB1;
    let grid = TimeGrid::covering(cfg.dt, 1.0)?;
    let seed = ctx.seed(TAG_E8);
    let (lo, hi, t_max) = (0.05, 1.5, 0.95);
    let init = || E8Acc {
        pre: DriftAccumulator::standard(lo, hi),
        post: DriftAccumulator::standard(lo, hi),
        post_flipped: DriftAccumulator::standard(lo, hi),
        rho: Vec::new(),
        sigma_times: Vec::new(),
    };
    let acc = fold_paths(cfg.n_paths, init, |acc, i| {
        let stream = RngStream::new(seed, i as u64);
        let path = sample_bm(grid, &stream, 0.0, 0.0, false);
        let tr = detect(s7, &path)?;
        let rho = weight(&spec, s7, &path, &tr)?;
        let v = path.values();
        let h = tr.aux_index(aux::HORIZON).expect("horizon index");
        let sigma = bridge_resolved(&path, &tr, &stream.substream(BRIDGE_SUBSTREAM))?.sigma_index;
        for k in 0..h {
            let tk = path.time(k);
            if tk > t_max {
                break;
            }
            let x = v[k];
            let ax = x.abs();
            if !(ax >= lo && ax < hi) {
                continue;
            }
            let sg = x.signum();
            let dx = sg * (v[k + 1] - x);
            let dt = path.step_dt(k + 1);
            if k + 1 < sigma {
                let p = predicted_drift(
                    &spec,
                    s7,
                    DriftState::new(tk, x, f64::NAN, Regime::PreSigma),
                )?;
                acc.pre.add(ax, dx, dt, sg * p, rho);
            } else if k >= sigma {
                let p = sg
                    * predicted_drift(
                        &spec,
                        s7,
                        DriftState::new(tk, x, f64::NAN, Regime::PostSigma),
                    )?;
                acc.post.add(ax, dx, dt, p, rho);
                acc.post_flipped.add(ax, dx, dt, -p, rho);
            }
        }
        acc.rho.push(rho);
        acc.sigma_times.push(tr.sigma_time);
        Ok(())
    })?;
    ctx.tally(0, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s7.code()).spec(spec.name());
    ctx.push(meta(acc.pre.finish().to_report("drift_pre_sigma")));
    ctx.push(meta(
        acc.post.finish().to_report("drift_post_sigma_plus_inv_B"),
    ));
    ctx.push(meta(
        acc.post_flipped
            .finish()
            .to_report("drift_post_sigma_minus_inv_B")
            .diagnostic(),
    ));
    ctx.push(meta(mean_test(&acc.rho, None, 1.0, 3.0)?.named("mean_rho")));
    ctx.push(avoidance_check(s7, &acc.sigma_times)?);
    Ok(())
}
