//! Measure changes that keep the pseudo-stopping property.

use super::{fold_paths, resolved, Ctx};
use crate::azema::DEFAULT_SCALE_DRIFT;
use crate::error::Result;
use crate::measure_change::{pseudo_a_at_sigma, solve_x_minus_c, MeasureChangeSpec};
use crate::path_engine::{sample_absorbed, sample_to_level_one, RngStream};
use crate::random_times::{detect, ScenarioId};
use crate::stat_tests::{tolerance_test, weighted_ks, weighted_mean, Reference, TestReport};

const TAG_S4: u64 = 6;
const TAG_S5: u64 = 61;

const ROOT_TOL: f64 = 1e-10;
const H_TOL: f64 = 1e-8;
const MEAN_RHO_TOL: f64 = 0.02;

pub(crate) fn e6(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s4 = ScenarioId::S4Invariance;
    let inv = ctx.invariance()?;
    let spec = MeasureChangeSpec::StochExpG(inv.clone());

    let (c, residual) = solve_x_minus_c()?;
    ctx.push(
        tolerance_test(residual, 0.0, ROOT_TOL, 0.0, 1.0)
            .named("x_minus_c_root_residual")
            .detail(format!("c={c:.16e} residual={residual:.3e}")),
    );
    let h1 = inv.h_exact(1.0)?;
    let dh1 = inv.h_prime_numeric(1.0)?;
    ctx.push(
        tolerance_test(h1, 1.0, H_TOL, 0.0, 1.0)
            .named("h_at_one")
            .spec(spec.name()),
    );
    ctx.push(
        tolerance_test(dh1, 1.0, H_TOL, 0.0, 1.0)
            .named("h_slope_at_one")
            .spec(spec.name()),
    );

    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_S4);
    // (ρ, A_σ) per path; censored paths keep ρ at the cap and no A_σ.
    let out: Vec<(f64, Option<f64>)> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_absorbed(&rc, &RngStream::new(seed, i as u64))?;
        let rho = inv.log_weight(&path).exp();
        let tr = detect(s4, &path)?;
        let a = if tr.censored {
            None
        } else {
            Some(pseudo_a_at_sigma(s4, &path, &tr, 0.0)?)
        };
        acc.push((rho, a));
        Ok(())
    })?;
    let rho_all: Vec<f64> = out.iter().map(|r| r.0).collect();
    let (pairs, censored) = resolved(out.into_iter().map(|(r, a)| a.map(|a| (r, a))).collect());
    ctx.tally(censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s4.code()).spec(spec.name());
    let m = weighted_mean(&rho_all, None)?;
    ctx.push(meta(
        tolerance_test(m.mean, 1.0, MEAN_RHO_TOL, m.se, m.n_effective).named("mean_rho_at_cap"),
    ));

    let rho: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let a: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let q_stat: Vec<f64> = a.iter().map(|&a| 1.0 - inv.h(1.0 - a)).collect();
    ctx.push(meta(
        weighted_ks(&a, None, Reference::Uniform01, cfg.ks_threshold)?.named("ks_uniform_A_sigma"),
    ));
    ctx.push(meta(
        weighted_ks(&q_stat, Some(&rho), Reference::Uniform01, cfg.ks_threshold)?
            .named("ks_uniform_weighted_h_statistic"),
    ));
    ctx.push(meta(
        weighted_ks(&a, Some(&rho), Reference::Uniform01, cfg.ks_threshold)?
            .named("ks_uniform_weighted_A_sigma")
            .exploratory(),
    ));

    let s5 = ScenarioId::S5ScaleDrift;
    let b = DEFAULT_SCALE_DRIFT;
    let rc5 = rc.with_drift(b);
    let seed5 = ctx.seed(TAG_S5);
    let out: Vec<Option<f64>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_to_level_one(&rc5, &RngStream::new(seed5, i as u64))?;
        let tr = detect(s5, &path)?;
        acc.push(if tr.censored {
            None
        } else {
            Some(pseudo_a_at_sigma(s5, &path, &tr, b)?)
        });
        Ok(())
    })?;
    let (a5, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    let ks5 = weighted_ks(&a5, None, Reference::Uniform01, cfg.ks_threshold)?
        .named("ks_uniform_scale_statistic")
        .scenario(s5.code())
        .detail(format!("drift={b}"));
    ctx.push(ks5);
    Ok(())
}
