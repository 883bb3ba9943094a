//! The two counterexamples: `ρ = 2 Z_σ` on the pseudo-stopping time and
//! `ρ = log N̄_∞` on the honest maximum.

use super::{count_report, fold_paths, indicator, resolved, scaled_quota, Ctx};
use crate::azema::{
    closed_form_bundle, counterexample_bundle, nested_mc_z_q_log_max, NestedMcConfig,
};
use crate::error::Result;
use crate::measure_change::{pseudo_a_at_sigma, weight, MeasureChangeSpec};
use crate::path_engine::{map_collect, sample_absorbed, sample_to_level_one, RngStream};
use crate::random_times::{aux, detect, ScenarioId};
use crate::stat_tests::{mean_test, weighted_ks, Reference, TestReport};
use rand::Rng;

const TAG_PSEUDO: u64 = 51;
const TAG_HONEST: u64 = 52;
const TAG_STATES: u64 = 53;
const TAG_NESTED: u64 = 54;

const RATIO_TOL: f64 = 1e-9;

const POWERS: [(&str, i32); 3] = [("one", 0), ("x", 1), ("x2", 2)];

pub(crate) fn e5(ctx: &mut Ctx) -> Result<()> {
    two_z_sigma(ctx)?;
    log_max(ctx)
}

struct PseudoRecord {
    rho: f64,
    z_sigma: f64,
    /// Per `t`: (1{σ>t}, Z_t).
    at: Vec<(f64, f64)>,
}

fn two_z_sigma(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s2 = ScenarioId::S2PiPseudo;
    let spec = MeasureChangeSpec::TwoZSigma;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_PSEUDO);
    let grid = cfg.t_grid.clone();
    let out: Vec<Option<PseudoRecord>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_to_level_one(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(s2, &path)?;
        if tr.censored {
            acc.push(None);
            return Ok(());
        }
        let t1 = tr.aux_index(aux::T1).expect("resolved first passage");
        let at = grid
            .iter()
            .map(|&t| {
                let k = path.index_at(t).min(t1);
                (
                    indicator(tr.sigma_time > t),
                    1.0 - path.max_through(k).clamp(0.0, 1.0),
                )
            })
            .collect();
        let z_sigma = 1.0 - pseudo_a_at_sigma(s2, &path, &tr, 0.0)?;
        acc.push(Some(PseudoRecord {
            rho: weight(&spec, s2, &path, &tr)?,
            z_sigma,
            at,
        }));
        Ok(())
    })?;
    let (recs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s2.code()).spec(spec.name());
    for (j, &t) in grid.iter().enumerate() {
        for (name, p) in POWERS {
            let d: Vec<f64> = recs
                .iter()
                .map(|r| {
                    let (after, z) = r.at[j];
                    let g = z.powi(p);
                    r.rho * g * after - z * z * g
                })
                .collect();
            ctx.push(meta(
                mean_test(&d, None, 0.0, 3.0)?
                    .named(format!("weighted_survival_{name}"))
                    .at(t),
            ));
        }
    }
    let rho: Vec<f64> = recs.iter().map(|r| r.rho).collect();
    let zs: Vec<f64> = recs.iter().map(|r| r.z_sigma).collect();
    ctx.push(meta(
        weighted_ks(&zs, Some(&rho), Reference::Density2x, cfg.ks_threshold)?
            .named("ks_density_2x_Z_sigma"),
    ));
    ctx.push(meta(mean_test(&rho, None, 1.0, 3.0)?.named("mean_rho")));
    Ok(())
}

fn log_max(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s3 = ScenarioId::S3StoppedMaxHonest;
    let spec = MeasureChangeSpec::LogNbar;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_HONEST);
    let out: Vec<Option<(f64, f64)>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_absorbed(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(s3, &path)?;
        if tr.censored {
            acc.push(None);
            return Ok(());
        }
        let rho = weight(&spec, s3, &path, &tr)?;
        let p = closed_form_bundle(s3, &path, &tr)?;
        let q = counterexample_bundle(&path);
        let mut nbar = path.step_max(0);
        let mut worst = 0.0f64;
        for k in 0..tr.aux_index(aux::T0).expect("absorbed") {
            nbar = nbar.max(path.step_max(k));
            let ratio = q.z_q[k] / q.n_q[k] / p.d[k];
            let target = 1.0 + nbar.ln();
            worst = worst.max((ratio - target).abs() / target);
        }
        acc.push(Some((rho, worst)));
        Ok(())
    })?;
    let (recs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s3.code()).spec(spec.name());
    let worst = recs.iter().map(|r| r.1).fold(0.0, f64::max);
    ctx.push(meta(
        TestReport::new(
            "decreasing_factor_ratio",
            worst,
            0.0,
            RATIO_TOL,
            recs.len() as f64,
        )
        .detail("max relative error of (Z^Q/N^Q)/D^P against 1 + log Nbar"),
    ));
    let rho: Vec<f64> = recs.iter().map(|r| r.0).collect();
    ctx.push(meta(mean_test(&rho, None, 1.0, 3.0)?.named("mean_rho")));

    // Sampled states: path i, time uniform on (0, T0 ∧ window).
    let state_seed = ctx.seed(TAG_STATES);
    let mut states = Vec::with_capacity(cfg.nested_states);
    let mut i = 0u64;
    while states.len() < cfg.nested_states {
        let path = sample_absorbed(&rc, &RngStream::new(state_seed, i))?;
        let mut rng = RngStream::new(state_seed, i).substream(1).rng();
        i += 1;
        let Some(t0) = path.absorbed_at() else {
            continue;
        };
        let t = rng.random::<f64>() * path.time(t0).min(cfg.window);
        let k = path.index_at(t);
        if path.values()[k] > 0.0 {
            let tk = path.time(k);
            states.push((path, tk));
        }
    }
    let nested = NestedMcConfig {
        n_inner: cfg.nested_inner,
        dt: cfg.nested_dt,
    };
    let nested_seed = ctx.seed(TAG_NESTED);
    let results = map_collect(states.len(), |j| {
        let (path, t) = &states[j];
        let est = nested_mc_z_q_log_max(path, *t, &nested, &RngStream::new(nested_seed, j as u64))?;
        let closed = counterexample_bundle(path).z_q[path.index_at(*t)];
        Ok::<_, crate::LabError>((closed, est))
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for (j, r) in results.into_iter().enumerate() {
        let (closed, est) = r?;
        let diff = (closed - est.estimate).abs();
        let rep = TestReport::new(
            "nested_Z_Q",
            diff,
            est.se,
            3.0 * est.se,
            nested.n_inner as f64,
        )
        .detail(format!(
            "state={j} closed={closed:.6e} nested={:.6e}",
            est.estimate
        ))
        .at(states[j].1)
        .exploratory();
        outcomes.push(rep.pass);
        ctx.push(meta(rep));
    }
    let need = scaled_quota(47, 50, outcomes.len());
    ctx.push(meta(count_report("nested_Z_Q_quota", &outcomes, need)));
    Ok(())
}
