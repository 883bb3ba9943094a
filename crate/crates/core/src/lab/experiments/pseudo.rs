//! Pseudo-stopping basics, dual projection and push-to-infinity on the
//! first-passage ensemble.

use super::{count_report, fold_paths, indicator, resolved, scaled_quota, Ctx};
use crate::azema::push_to_infinity_check;
use crate::error::Result;
use crate::measure_change::{pseudo_a_at_sigma, MeasureChangeSpec};
use crate::path_engine::{sample_to_level_one, sample_to_level_one_coupled, RngStream};
use crate::random_times::{aux, detect, ScenarioId};
use crate::stat_tests::{martingale_orthogonality, mean_test, weighted_ks, Reference, TestReport};

const TAG_E1: u64 = 1;
const TAG_E4: u64 = 4;
const TAG_E9: u64 = 9;

/// Level below which `M = B` is stopped in the optional-stopping check.
const EXIT_LOW: f64 = -2.0;

const TAG_E1_BRIDGE: u64 = 11;

/// Per path of the bridge-exact ensemble.
struct E1Record {
    m_pi: f64,
    rho: f64,
    increment: f64,
    functionals: [f64; 4],
}

const ORTHOGONALITY_NAMES: [&str; 4] = ["one", "B_s", "Bbar_s", "sigma_after_s"];

/// The uniformity of `A_σ` is checked on coupled plain-grid paths at two
/// step sizes; the martingale checks run on a separate bridge-exact ensemble.
pub(crate) fn e1(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let spec = MeasureChangeSpec::FOfAPseudo(ctx.profile()?).checked()?;
    let MeasureChangeSpec::FOfAPseudo(f) = &spec else {
        unreachable!()
    };
    let rc = ctx.run_config();
    let (s, t) = (cfg.t_grid[0].min(1.0), 1.0);
    let s2 = ScenarioId::S2PiPseudo;

    let seed = ctx.seed(TAG_E1);
    let grid_rc = rc.grid_only();
    let out: Vec<Option<(f64, f64)>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let (coarse, fine) =
            sample_to_level_one_coupled(&grid_rc, &RngStream::new(seed, i as u64), cfg.refine)?;
        let (tc, tf) = (detect(s2, &coarse)?, detect(s2, &fine)?);
        if tc.censored || tf.censored {
            acc.push(None);
            return Ok(());
        }
        acc.push(Some((
            pseudo_a_at_sigma(s2, &coarse, &tc, 0.0)?,
            pseudo_a_at_sigma(s2, &fine, &tf, 0.0)?,
        )));
        Ok(())
    })?;
    let (pairs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s2.code());
    let coarse: Vec<f64> = pairs.iter().map(|r| r.0).collect();
    let fine: Vec<f64> = pairs.iter().map(|r| r.1).collect();
    let ks_c = weighted_ks(&coarse, None, Reference::Uniform01, cfg.ks_threshold)?;
    let ks_f = weighted_ks(&fine, None, Reference::Uniform01, cfg.ks_threshold)?;
    let refinement = TestReport::new(
        "ks_refinement_decrease",
        ks_f.statistic - ks_c.statistic,
        0.0,
        0.0,
        ks_f.n_effective,
    )
    .detail(format!(
        "coarse dt={:e} ks={:.6e}; fine dt={:e} ks={:.6e}",
        cfg.dt,
        ks_c.statistic,
        cfg.dt / cfg.refine as f64,
        ks_f.statistic
    ));
    ctx.push(meta(ks_c.named("ks_uniform_A_sigma")));
    ctx.push(meta(ks_f.named("ks_uniform_A_sigma_fine")));
    ctx.push(meta(refinement));

    let seed = ctx.seed(TAG_E1_BRIDGE);
    let out: Vec<Option<E1Record>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_to_level_one(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(s2, &path)?;
        if tr.censored {
            acc.push(None);
            return Ok(());
        }
        let a = pseudo_a_at_sigma(s2, &path, &tr, 0.0)?;
        let pi = tr.sigma_index;
        // B at π is its running maximum
        let stopped = |k: usize| {
            if k >= pi {
                path.max_through(pi)
            } else {
                path.values()[k]
            }
        };
        let m_pi = match path.first_at_or_below(EXIT_LOW) {
            Some(e) if e <= pi => EXIT_LOW,
            _ => stopped(pi),
        };
        let (ks, kt) = (path.index_at(s), path.index_at(t));
        let increment = stopped(kt) - stopped(ks);
        let functionals = [
            1.0,
            path.values()[ks],
            path.max_through(ks),
            indicator(tr.sigma_time > s),
        ];
        acc.push(Some(E1Record {
            m_pi,
            rho: f.eval(a),
            increment,
            functionals,
        }));
        Ok(())
    })?;
    let (recs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);

    let m_pi: Vec<f64> = recs.iter().map(|r| r.m_pi).collect();
    ctx.push(meta(
        mean_test(&m_pi, None, 0.0, 3.0)?.named("optional_stopping_exit_pm2"),
    ));

    let rho: Vec<f64> = recs.iter().map(|r| r.rho).collect();
    ctx.push(meta(
        mean_test(&rho, None, 1.0, 3.0)?
            .named("mean_rho")
            .spec(spec.name()),
    ));

    let inc: Vec<f64> = recs.iter().map(|r| r.increment).collect();
    for (j, name) in ORTHOGONALITY_NAMES.iter().enumerate() {
        let g: Vec<f64> = recs.iter().map(|r| r.functionals[j]).collect();
        let rep = martingale_orthogonality(&inc, &g, Some(&rho), 3.0)?
            .named(format!("stopped_martingale_q_{name}"))
            .spec(spec.name())
            .at(s);
        ctx.push(meta(rep));
    }
    Ok(())
}

/// Dual projection under `ρ = f(A_σ)` on the pseudo-stopping time:
/// `E[ρ 1{σ<=t}] = E[ρ μ^F_{σ∧t}]` with `μ^F = -log ∫_A^1 f`.
pub(crate) fn e4(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let spec = MeasureChangeSpec::FOfAPseudo(ctx.profile()?).checked()?;
    let MeasureChangeSpec::FOfAPseudo(f) = &spec else {
        unreachable!()
    };
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_E4);
    let s2 = ScenarioId::S2PiPseudo;
    let grid = cfg.t_grid.clone();
    let out: Vec<Option<Vec<f64>>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_to_level_one(&rc, &RngStream::new(seed, i as u64))?;
        let tr = detect(s2, &path)?;
        if tr.censored {
            acc.push(None);
            return Ok(());
        }
        let rho = f.eval(pseudo_a_at_sigma(s2, &path, &tr, 0.0)?);
        let mut diffs = Vec::with_capacity(grid.len());
        for &t in &grid {
            let k = path.index_at(t).min(tr.sigma_index);
            let a = path.max_through(k).clamp(0.0, 1.0);
            let mu = -f.unit_tail(a)?.ln();
            diffs.push(rho * (indicator(tr.sigma_time <= t) - mu));
        }
        acc.push(Some(diffs));
        Ok(())
    })?;
    let (recs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    let mut outcomes = Vec::with_capacity(grid.len());
    for (j, &t) in grid.iter().enumerate() {
        let d: Vec<f64> = recs.iter().map(|r| r[j]).collect();
        let rep = mean_test(&d, None, 0.0, 3.0)?
            .named("dual_projection")
            .scenario(s2.code())
            .spec(spec.name())
            .at(t)
            .exploratory();
        outcomes.push(rep.pass);
        ctx.push(rep);
    }
    let need = scaled_quota(9, 10, outcomes.len());
    ctx.push(
        count_report("dual_projection_quota", &outcomes, need)
            .scenario(s2.code())
            .spec(spec.name()),
    );
    Ok(())
}

struct E9Record {
    /// Per `t`: (σ_S1 > t, Z_S1, σ_S2 > t, Z_S2, B, B̄) at `t ∧ T1`.
    at: Vec<[f64; 6]>,
}

/// `E[F 1{σ>t}] = E[F Z_t]` for `F ∈ {1, B, B̄}` on the two times of the
/// first-passage ensemble. The path ends at `T1`, so functionals are read at
/// `t ∧ T1`.
pub(crate) fn e9(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let rc = ctx.run_config();
    let seed = ctx.seed(TAG_E9);
    let grid = cfg.t_grid.clone();
    let out: Vec<Option<E9Record>> = fold_paths(cfg.n_paths, Vec::new, |acc, i| {
        let path = sample_to_level_one(&rc, &RngStream::new(seed, i as u64))?;
        let t1r = detect(ScenarioId::S1ExcursionHonest, &path)?;
        if t1r.censored {
            acc.push(None);
            return Ok(());
        }
        let t2r = detect(ScenarioId::S2PiPseudo, &path)?;
        let v = path.values();
        let t1 = t1r.aux_index(aux::T1).expect("resolved first passage");
        let at = grid
            .iter()
            .map(|&t| {
                let k = path.index_at(t).min(t1);
                let b = v[k];
                let bbar = path.max_through(k);
                [
                    indicator(t1r.sigma_time > t),
                    1.0 - b.max(0.0).min(1.0),
                    indicator(t2r.sigma_time > t),
                    1.0 - bbar.clamp(0.0, 1.0),
                    b,
                    bbar,
                ]
            })
            .collect();
        acc.push(Some(E9Record { at }));
        Ok(())
    })?;
    let (recs, censored) = resolved(out);
    ctx.tally(censored, cfg.n_paths);
    for (j, &t) in grid.iter().enumerate() {
        for (scenario, off) in [
            (ScenarioId::S1ExcursionHonest, 0),
            (ScenarioId::S2PiPseudo, 2),
        ] {
            let after: Vec<bool> = recs.iter().map(|r| r.at[j][off] > 0.5).collect();
            let z: Vec<f64> = recs.iter().map(|r| r.at[j][off + 1]).collect();
            for (name, col) in [("one", None), ("B_t", Some(4)), ("Bbar_t", Some(5))] {
                let fv: Vec<f64> = recs
                    .iter()
                    .map(|r| col.map_or(1.0, |c| r.at[j][c]))
                    .collect();
                let rep = push_to_infinity_check(&after, &z, &fv, 3.0)?
                    .named(format!("push_to_infinity_{name}"))
                    .scenario(scenario.code())
                    .at(t);
                ctx.push(rep);
            }
        }
    }
    Ok(())
}
