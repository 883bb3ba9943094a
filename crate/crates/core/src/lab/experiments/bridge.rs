//! The last sign change of `2W_t - W_1`.

use super::{bundle_violation, count_report, fold_paths, scaled_quota, Accumulator, Ctx};
use crate::azema::{closed_form_bundle, nested_mc_z, NestedMcConfig};
use crate::error::{LabError, Result};
use crate::path_engine::{map_collect, sample_bm, RngStream, TimeGrid};
use crate::random_times::{avoidance_check, detect, ScenarioId};
use crate::stat_tests::TestReport;
use rand::Rng;

const TAG_PATHS: u64 = 7;
const TAG_NESTED: u64 = 71;

const EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
const MEDIAN_D_LIMIT: f64 = 0.05;
const STRUCTURE_TOL: f64 = 1e-9;

struct E7Acc {
    /// `D_{1-ε}` per path, one column per entry of [`EPSILONS`].
    d_near_one: Vec<[f64; 3]>,
    sigma_times: Vec<f64>,
    violation: f64,
}

impl Accumulator for E7Acc {
    fn merge(&mut self, o: Self) {
        self.d_near_one.extend(o.d_near_one);
        self.sigma_times.extend(o.sigma_times);
        self.violation = self.violation.max(o.violation);
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub(crate) fn e7(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let s6 = ScenarioId::S6HalfBridge;
    let grid = TimeGrid::covering(cfg.dt, 1.0)?;
    if EPSILONS.iter().any(|&e| e < 2.0 * cfg.dt) {
        return Err(LabError::Config(format!(
            "dt={} does not resolve 1 - {:e}",
            cfg.dt, EPSILONS[2]
        )));
    }
    let seed = ctx.seed(TAG_PATHS);
    let init = || E7Acc {
        d_near_one: Vec::new(),
        sigma_times: Vec::new(),
        violation: 0.0,
    };
    let acc = fold_paths(cfg.n_paths, init, |acc, i| {
        let path = sample_bm(grid, &RngStream::new(seed, i as u64), 0.0, 0.0, false);
        let tr = detect(s6, &path)?;
        let b = closed_form_bundle(s6, &path, &tr)?;
        acc.violation = acc.violation.max(bundle_violation(&b));
        acc.d_near_one
            .push(EPSILONS.map(|e| b.d[path.index_at(1.0 - e)]));
        acc.sigma_times.push(tr.sigma_time);
        Ok(())
    })?;
    ctx.tally(0, cfg.n_paths);
    let meta = |r: TestReport| r.scenario(s6.code());
    ctx.push(meta(TestReport::new(
        "bundle_structure",
        acc.violation,
        0.0,
        STRUCTURE_TOL,
        acc.sigma_times.len() as f64,
    )));

    let medians: Vec<f64> = (0..EPSILONS.len())
        .map(|j| median(acc.d_near_one.iter().map(|r| r[j]).collect()))
        .collect();
    let listing = EPSILONS
        .iter()
        .zip(&medians)
        .map(|(e, m)| format!("eps={e:e}:{m:.6e}"))
        .collect::<Vec<_>>()
        .join(" ");
    let last = *medians.last().expect("epsilons");
    let n = acc.d_near_one.len() as f64;
    ctx.push(meta(
        TestReport::new("median_D_near_one", last, 0.0, MEDIAN_D_LIMIT, n)
            .at(1.0 - EPSILONS[2])
            .detail(listing.clone()),
    ));
    let increases = medians.windows(2).filter(|w| w[1] >= w[0]).count();
    ctx.push(meta(
        TestReport::new("median_D_decreasing", increases as f64, 0.0, 0.0, n).detail(listing),
    ));
    ctx.push(avoidance_check(s6, &acc.sigma_times)?);

    let nested = NestedMcConfig {
        n_inner: cfg.nested_inner,
        dt: cfg.nested_dt,
    };
    let nested_seed = ctx.seed(TAG_NESTED);
    let results = map_collect(cfg.nested_states, |j| -> Result<(f64, f64, f64, f64)> {
        let stream = RngStream::new(seed, j as u64);
        let path = sample_bm(grid, &stream, 0.0, 0.0, false);
        let tr = detect(s6, &path)?;
        let t = path.time(path.index_at(stream.substream(1).rng().random::<f64>()));
        let closed = closed_form_bundle(s6, &path, &tr)?.z[path.index_at(t)];
        let est = nested_mc_z(
            s6,
            &path,
            &tr,
            t,
            &nested,
            &RngStream::new(nested_seed, j as u64),
        )?;
        Ok((t, closed, est.estimate, est.se))
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for (j, r) in results.into_iter().enumerate() {
        let (t, closed, est, se) = r?;
        let rep = TestReport::new(
            "nested_Z",
            (closed - est).abs(),
            se,
            3.0 * se,
            nested.n_inner as f64,
        )
        .detail(format!("state={j} closed={closed:.6e} nested={est:.6e}"))
        .at(t)
        .exploratory();
        outcomes.push(rep.pass);
        ctx.push(meta(rep));
    }
    let need = scaled_quota(47, 50, outcomes.len());
    ctx.push(meta(count_report("nested_Z_quota", &outcomes, need)));
    Ok(())
}
