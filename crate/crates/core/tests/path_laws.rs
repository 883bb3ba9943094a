//! Laws of simulated paths and random times against closed-form oracles.

use rtlab::path_engine::{
    map_collect, sample_absorbed, sample_bm, sample_to_level_one, RngStream, RunConfig, TimeGrid,
};
use rtlab::random_times::{detect, ScenarioId};
use rtlab::stat_tests::{weighted_ks, weighted_mean, Reference};
use std::f64::consts::PI;

fn fraction(flags: &[bool]) -> (f64, f64) {
    let p = flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64;
    (p, (p * (1.0 - p) / flags.len() as f64).sqrt())
}

#[test]
fn absorbed_fraction_by_t100() {
    // P(T_0 > T) from 1 = P(|G| < 1/sqrt(T)) = erf(1 / sqrt(2T))
    let t: f64 = 100.0;
    let oracle = libm::erf(1.0 / (2.0 * t).sqrt());
    let cfg = RunConfig::new(1e-2, t, t).exact();
    let alive: Vec<bool> = map_collect(10_000, |i| {
        let p = sample_absorbed(&cfg, &RngStream::new(44, i as u64)).unwrap();
        p.absorbed_at().is_none_or(|k| p.time(k) > t)
    });
    let (p, se) = fraction(&alive);
    assert!((p - oracle).abs() < 4.0 * se, "{p} vs {oracle} (se {se})");
    assert!((oracle - 0.0797).abs() < 1e-3);
}

#[test]
fn mean_running_max_at_one() {
    // max of BM on [0, 1] has the law of |B_1|. Each step's supremum is drawn
    // from the bridge law P(M > m) = exp(-2(m-x)(m-y)/h), so a coarse grid is exact.
    use rand::Rng;
    let grid = TimeGrid::covering(1e-2, 1.0).unwrap();
    let m: Vec<f64> = map_collect(40_000, |i| {
        let stream = RngStream::new(53, i as u64);
        let p = sample_bm(grid, &stream, 0.0, 0.0, false);
        let mut rng = stream.substream(9).rng();
        let v = p.values();
        (1..=p.last_index())
            .map(|k| {
                let (x, y, h) = (v[k - 1], v[k], p.step_dt(k));
                let u: f64 = 1.0 - rng.random::<f64>();
                let m = 0.5 * (x + y + ((y - x).powi(2) - 2.0 * h * u.ln()).sqrt());
                // inversion check: the tail at m recovers u
                debug_assert!(((-2.0 * (m - x) * (m - y) / h).exp() - u).abs() < 1e-9);
                m
            })
            .fold(0.0, f64::max)
    });
    let est = weighted_mean(&m, None).unwrap();
    let oracle = (2.0 / PI).sqrt();
    assert!((est.mean - oracle).abs() < 0.01, "{} vs {oracle}", est.mean);
    // the grid maximum alone misses the between-step excursions
    let grid_only: Vec<f64> = map_collect(40_000, |i| {
        let p = sample_bm(grid, &RngStream::new(53, i as u64), 0.0, 0.0, false);
        p.values().iter().copied().fold(0.0, f64::max)
    });
    assert!(oracle - weighted_mean(&grid_only, None).unwrap().mean > 0.03);
}

#[test]
fn level_one_reached_by_horizon_1000() {
    // P(T_1 <= T) = 1 - erf(1 / sqrt(2T))
    let horizon: f64 = 1000.0;
    let oracle = 1.0 - libm::erf(1.0 / (2.0 * horizon).sqrt());
    let cfg = RunConfig::new(1e-3, 1.0, horizon);
    let hit: Vec<bool> = map_collect(4_000, |i| {
        let p = sample_to_level_one(&cfg, &RngStream::new(62, i as u64)).unwrap();
        p.first_hit(1.0).is_some_and(|k| p.time(k) <= horizon)
    });
    let (p, se) = fraction(&hit);
    assert!(p >= 0.97, "{p}");
    assert!((p - oracle).abs() < 4.0 * se, "{p} vs {oracle}");
}

#[test]
fn local_time_estimators_mean_and_agreement() {
    let oracle = (2.0 / PI).sqrt();
    let rmse = |dt: f64, n: usize| -> (f64, f64) {
        let grid = TimeGrid::covering(dt, 1.0).unwrap();
        let pairs: Vec<(f64, f64)> = map_collect(n, |i| {
            let p = sample_bm(grid, &RngStream::new(70, i as u64), 0.0, 0.0, false);
            let last = |q: rtlab::path_engine::SamplePath| *q.values().last().unwrap();
            (last(p.local_time_at_zero()), last(p.tanaka_local_time()))
        });
        let crossing: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mse = pairs.iter().map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
        (weighted_mean(&crossing, None).unwrap().mean, mse.sqrt())
    };
    let (mean_coarse, rmse_coarse) = rmse(1e-3, 4_000);
    let (mean_fine, rmse_fine) = rmse(1e-4, 4_000);
    assert!((mean_fine - oracle).abs() < 0.02, "{mean_fine}");
    assert!((mean_coarse - oracle).abs() < 0.02, "{mean_coarse}");
    assert!(rmse_fine < rmse_coarse, "{rmse_fine} !< {rmse_coarse}");
}

#[test]
fn pseudo_stopping_value_is_uniform() {
    let cfg = RunConfig::new(1e-3, 1.0, 50.0);
    let s2 = ScenarioId::S2PiPseudo;
    let a: Vec<Option<f64>> = map_collect(20_000, |i| {
        let p = sample_to_level_one(&cfg, &RngStream::new(121, i as u64)).unwrap();
        let tr = detect(s2, &p).unwrap();
        (!tr.censored).then(|| p.max_through(tr.sigma_index).min(1.0))
    });
    let a: Vec<f64> = a.into_iter().flatten().collect();
    assert!(a.len() > 19_900);
    let ks = weighted_ks(&a, None, Reference::Uniform01, 0.015).unwrap();
    assert!(ks.pass, "ks {}", ks.statistic);
}

#[test]
fn log_max_of_absorbed_path_is_exponential() {
    let cfg = RunConfig::new(1e-3, 1.0, 50.0);
    let s3 = ScenarioId::S3StoppedMaxHonest;
    let x: Vec<Option<f64>> = map_collect(20_000, |i| {
        let p = sample_absorbed(&cfg, &RngStream::new(122, i as u64)).unwrap();
        let tr = detect(s3, &p).unwrap();
        (!tr.censored).then(|| p.max_through(tr.sigma_index).ln())
    });
    let x: Vec<f64> = x.into_iter().flatten().collect();
    let ks = weighted_ks(&x, None, Reference::Exp1, 0.02).unwrap();
    assert!(ks.pass, "ks {}", ks.statistic);
    // mean of Exp(1), and P(log max > 1) = 1/e
    let m = weighted_mean(&x, None).unwrap();
    assert!((m.mean - 1.0).abs() < 4.0 * m.se, "{}", m.mean);
    let tail = x.iter().filter(|&&v| v > 1.0).count() as f64 / x.len() as f64;
    assert!((tail - (-1.0f64).exp()).abs() < 0.015, "{tail}");
}

#[test]
fn half_bridge_time_lies_in_unit_interval() {
    let grid = TimeGrid::covering(1e-3, 1.0).unwrap();
    for i in 0..200 {
        let p = sample_bm(grid, &RngStream::new(7, i), 0.0, 0.0, false);
        let tr = detect(ScenarioId::S6HalfBridge, &p).unwrap();
        assert!((0.0..=1.0).contains(&tr.sigma_time));
        // at σ, 2W - W_1 changes sign or σ = 0
        let w1 = p.values()[p.index_at(1.0)];
        let k = tr.sigma_index;
        if k > 0 {
            let y = |j: usize| 2.0 * p.values()[j] - w1;
            assert!(y(k - 1) * y(k) <= 0.0);
        }
    }
}
