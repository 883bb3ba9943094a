//! Azéma supermartingales `Z_t = P(σ > t | F_t)`: closed forms with their
//! additive (`Z = m - A`) and multiplicative (`Z = N D`) decompositions, and a
//! nested Monte Carlo estimator used as an independent oracle.

use crate::error::{LabError, Result};
use crate::numerics::{erfc, gaussian_second_moment_tail, SQRT_2_OVER_PI};
use crate::path_engine::{PathRng, RngStream, SamplePath};
use crate::random_times::{aux, RandomTimeResult, ScenarioId};
use crate::stat_tests::{mean_test, TestReport};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

/// Floor applied to `Z` when integrating `dA / Z`.
pub const Z_FLOOR: f64 = 1e-12;
/// Drift of the driving path in the scale-function scenario.
pub const DEFAULT_SCALE_DRIFT: f64 = 0.5;

/// Pathwise `Z`, `A`, `m = Z + A`, `N`, `D`, indexed like the driving path.
#[derive(Clone, Debug, PartialEq)]
pub struct SupermartingaleBundle {
    pub scenario: ScenarioId,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub d: Vec<f64>,
}

impl SupermartingaleBundle {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn from_z_a(scenario: ScenarioId, z: Vec<f64>, a: Vec<f64>) -> Self {
        let m = z.iter().zip(&a).map(|(z, a)| z + a).collect();
        let d = multiplicative_decreasing_factor(&z, &a);
        let mut n = Vec::with_capacity(z.len());
        let mut last = 1.0;
        for (zk, dk) in z.iter().zip(&d) {
            if *dk > 0.0 {
                last = zk / dk;
            }
            n.push(last);
        }
        SupermartingaleBundle {
            scenario,
            z,
            a,
            m,
            n,
            d,
        }
    }
}

/// `D_k = exp(-∫ dA / Z)` with trapezoidal weights on each step and `Z`
/// floored at [`Z_FLOOR`].
pub fn multiplicative_decreasing_factor(z: &[f64], a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut integral = 0.0;
    out.push(1.0);
    for k in 1..z.len() {
        let da = a[k] - a[k - 1];
        if da != 0.0 {
            integral += 0.5 * da * (1.0 / z[k - 1].max(Z_FLOOR) + 1.0 / z[k].max(Z_FLOOR));
        }
        out.push((-integral).exp());
    }
    out
}

/// Scale function of BM with drift `b`: `s(x) = (1 - e^{-2bx}) / (2b)`.
pub fn scale_function(b: f64, x: f64) -> f64 {
    if b == 0.0 {
        x
    } else {
        -(-2.0 * b * x).exp_m1() / (2.0 * b)
    }
}

/// `sqrt(2/π) ∫_a^∞ x² e^{-x²/2} dx`, the conditional probability that the
/// half-bridge time lies after `t` given `a = |W_t| / sqrt(1 - t)`.
pub fn half_bridge_z(a: f64) -> f64 {
    (SQRT_2_OVER_PI * gaussian_second_moment_tail(a)).min(1.0)
}

/// `P(zero in (t, 1] | B_t = x)`.
pub fn last_zero_unit_z(t: f64, x: f64) -> f64 {
    if t >= 1.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    erfc(x.abs() / (2.0 * (1.0 - t)).sqrt())
}

fn stop_at(values: &[f64], stop: usize) -> impl Iterator<Item = f64> + '_ {
    (0..values.len()).map(move |k| values[k.min(stop)])
}

/// Running maximum of the path (bridge-exact when available), stopped at `stop`.
fn running_max(path: &SamplePath, stop: usize) -> Vec<f64> {
    let m = path.running_max();
    stop_at(m.values(), stop).collect()
}

fn check_resolved(tr: &RandomTimeResult, scenario: ScenarioId) -> Result<()> {
    if tr.censored {
        return Err(LabError::Censored);
    }
    if tr.scenario != scenario {
        return Err(LabError::Config(format!(
            "time detected for {} used with {}",
            tr.scenario, scenario
        )));
    }
    Ok(())
}

/// Closed-form bundle for `scenario` (the scale-function scenario uses
/// [`DEFAULT_SCALE_DRIFT`]; see [`scale_drift_bundle`]).
///
/// Fails with a domain error if `Z <= 0` strictly before σ.
pub fn closed_form_bundle(
    scenario: ScenarioId,
    path: &SamplePath,
    tr: &RandomTimeResult,
) -> Result<SupermartingaleBundle> {
    check_resolved(tr, scenario)?;
    use ScenarioId::*;
    let v = path.values();
    let bundle = match scenario {
        S1ExcursionHonest => {
            let t1 = tr.aux_index(aux::T1).ok_or(LabError::Censored)?;
            let z: Vec<f64> = stop_at(v, t1)
                .map(|b| (1.0 - b.max(0.0)).clamp(0.0, 1.0))
                .collect();
            let lt = path.local_time_at_zero();
            let a: Vec<f64> = stop_at(lt.values(), t1).map(|l| 0.5 * l).collect();
            SupermartingaleBundle::from_z_a(scenario, z, a)
        }
        S2PiPseudo => {
            let t1 = tr.aux_index(aux::T1).ok_or(LabError::Censored)?;
            let a: Vec<f64> = running_max(path, t1)
                .into_iter()
                .map(|m| m.min(1.0))
                .collect();
            pseudo_bundle(scenario, a)
        }
        S5ScaleDrift => return scale_drift_bundle(path, tr, DEFAULT_SCALE_DRIFT),
        S3StoppedMaxHonest => {
            let nbar = running_max(path, usize::MAX);
            let z: Vec<f64> = v.iter().zip(&nbar).map(|(n, m)| n / m).collect();
            let a: Vec<f64> = nbar.iter().map(|m| m.ln()).collect();
            let m = z.iter().zip(&a).map(|(z, a)| z + a).collect();
            let d = nbar.iter().map(|m| 1.0 / m).collect();
            SupermartingaleBundle {
                scenario,
                z,
                a,
                m,
                n: v.to_vec(),
                d,
            }
        }
        S4Invariance => {
            let r = crate::random_times::relative_to_max(v);
            let mut inf = f64::INFINITY;
            let a: Vec<f64> = r
                .iter()
                .map(|&x| {
                    inf = inf.min(x);
                    1.0 - inf
                })
                .collect();
            pseudo_bundle(scenario, a)
        }
        S6HalfBridge => {
            let h = tr.aux_index(aux::HORIZON).ok_or(LabError::Censored)?;
            let mut z = Vec::with_capacity(v.len());
            let mut a = Vec::with_capacity(v.len());
            let density = |k: usize| {
                let s = 1.0 - path.time(k);
                if k >= h || s <= 0.0 {
                    0.0
                } else {
                    SQRT_2_OVER_PI * v[k].abs() / s.powf(1.5) * (-v[k] * v[k] / (2.0 * s)).exp()
                }
            };
            let mut acc = 0.0;
            let mut prev = density(0);
            for k in 0..v.len() {
                let kk = k.min(h);
                let s = 1.0 - path.time(kk);
                let zk = if kk >= h || s <= 0.0 {
                    if v[h] == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    half_bridge_z(v[kk].abs() / s.sqrt())
                };
                if k >= 1 && k <= h {
                    let cur = density(k);
                    acc += 0.5 * (prev + cur) * path.step_dt(k);
                    prev = cur;
                }
                z.push(zk);
                a.push(acc);
            }
            SupermartingaleBundle::from_z_a(scenario, z, a)
        }
        S7LastZeroUnit => {
            let h = tr.aux_index(aux::HORIZON).ok_or(LabError::Censored)?;
            let lt = path.local_time_at_zero();
            let l = lt.values();
            let mut a = Vec::with_capacity(v.len());
            let mut acc = 0.0;
            a.push(0.0);
            for k in 1..v.len() {
                if k <= h {
                    let dl = l[k] - l[k - 1];
                    if dl > 0.0 {
                        let s = (1.0 - path.time(k - 1)).max(Z_FLOOR);
                        acc += (2.0 / (std::f64::consts::PI * s)).sqrt() * dl;
                    }
                }
                a.push(acc);
            }
            let z = (0..v.len())
                .map(|k| {
                    let kk = k.min(h);
                    last_zero_unit_z(path.time(kk).min(1.0), v[kk])
                })
                .collect();
            SupermartingaleBundle::from_z_a(scenario, z, a)
        }
    };
    if let Some(k) = (0..tr.sigma_index.min(bundle.len())).find(|&k| bundle.z[k] <= 0.0) {
        return Err(LabError::Domain(format!(
            "Z vanished at index {k} before σ at {}",
            tr.sigma_index
        )));
    }
    Ok(bundle)
}

/// Bundle of a pseudo-stopping time: `Z = 1 - A`, `N = 1`, `D = Z`.
fn pseudo_bundle(scenario: ScenarioId, a: Vec<f64>) -> SupermartingaleBundle {
    let z: Vec<f64> = a.iter().map(|a| 1.0 - a).collect();
    SupermartingaleBundle {
        scenario,
        m: vec![1.0; z.len()],
        n: vec![1.0; z.len()],
        d: z.clone(),
        z,
        a,
    }
}

/// Bundle, under the drifted law, of the last running-maximum time before
/// the last zero for BM with drift `b`: `A = s(max B) / s(1)`.
pub fn scale_drift_bundle(
    path: &SamplePath,
    tr: &RandomTimeResult,
    b: f64,
) -> Result<SupermartingaleBundle> {
    check_resolved(tr, ScenarioId::S5ScaleDrift)?;
    let t1 = tr.aux_index(aux::T1).ok_or(LabError::Censored)?;
    let s1 = scale_function(b, 1.0);
    let a = running_max(path, t1)
        .into_iter()
        .map(|m| (scale_function(b, m) / s1).clamp(0.0, 1.0))
        .collect();
    Ok(pseudo_bundle(ScenarioId::S5ScaleDrift, a))
}

/// Closed forms of the density `ρ = log max N` on the honest-maximum scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct QBundle {
    /// `E[ρ | F_t] = log N̄_t + N_t / N̄_t`.
    pub rho_t: Vec<f64>,
    pub z_q: Vec<f64>,
    pub n_q: Vec<f64>,
    pub d_q: Vec<f64>,
}

pub fn counterexample_bundle(path: &SamplePath) -> QBundle {
    let v = path.values();
    let nbar = running_max(path, usize::MAX);
    let mut out = QBundle {
        rho_t: vec![],
        z_q: vec![],
        n_q: vec![],
        d_q: vec![],
    };
    for (&n, &m) in v.iter().zip(&nbar) {
        let lm = m.ln();
        let rho = lm + n / m;
        let denom = n + m * lm;
        out.rho_t.push(rho);
        out.z_q.push(if denom > 0.0 {
            (n + n * lm) / denom
        } else {
            0.0
        });
        out.n_q.push(if rho > 0.0 { n / rho } else { 0.0 });
        out.d_q.push((1.0 + lm) / m);
    }
    out
}

/// Inner-simulation settings of the nested estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedMcConfig {
    pub n_inner: usize,
    /// Inner step; scale-invariant scenarios use it relative to the current scale.
    pub dt: f64,
}

impl Default for NestedMcConfig {
    fn default() -> Self {
        NestedMcConfig {
            n_inner: 2000,
            dt: 1e-3,
        }
    }
}

/// Nested estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NestedEstimate {
    pub estimate: f64,
    pub se: f64,
}

/// Probability that a Brownian bridge of length `dt` from `x` to `y`, both on
/// the same side of `c`, touches `c`.
#[inline]
fn bridge_touch(x: f64, y: f64, c: f64, dt: f64) -> f64 {
    let p = (x - c) * (y - c);
    if p <= 0.0 {
        1.0
    } else {
        (-2.0 * p / dt).exp()
    }
}

/// Runs BM from `x` until it leaves `(lo, hi)`; true if it leaves at `lo`.
/// Crossings between grid points are detected with bridge probabilities.
fn exits_low(mut x: f64, lo: f64, hi: f64, dt: f64, rng: &mut PathRng) -> bool {
    let sd = dt.sqrt();
    loop {
        let y = x + sd * rng.sample::<f64, _>(StandardNormal);
        if y <= lo {
            return true;
        }
        if y >= hi {
            return false;
        }
        if rng.random::<f64>() < bridge_touch(x, y, lo, dt) {
            return true;
        }
        if rng.random::<f64>() < bridge_touch(x, y, hi, dt) {
            return false;
        }
        x = y;
    }
}

/// Supremum of BM from `x > 0` until absorption at 0, using exact bridge
/// maxima between grid points and steps of `dt * scale²` where `scale` is the
/// current supremum. Stops early once the supremum exceeds `stop_above`.
fn sup_until_absorbed(x: f64, dt: f64, stop_above: f64, rng: &mut PathRng) -> f64 {
    let mut x = x;
    let mut sup = x;
    loop {
        let h = dt * sup * sup;
        let y = x + h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let u: f64 = 1.0 - rng.random::<f64>();
        let bridge_max = 0.5 * (x + y + ((y - x) * (y - x) - 2.0 * h * u.ln()).sqrt());
        if y <= 0.0 || rng.random::<f64>() < bridge_touch(x, y, 0.0, h) {
            // the bridge maximum is only valid for the whole step; the path
            // was absorbed somewhere inside it, so keep the pre-step supremum
            return sup.max(x);
        }
        sup = sup.max(bridge_max);
        if sup > stop_above {
            return sup;
        }
        x = y;
    }
}

fn binomial(hits: usize, n: usize) -> NestedEstimate {
    let p = hits as f64 / n as f64;
    NestedEstimate {
        estimate: p,
        se: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

fn mean_estimate(samples: &[f64]) -> NestedEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    NestedEstimate {
        estimate: mean,
        se: (var / n).sqrt(),
    }
}

/// Nested Monte Carlo estimate of `P(σ > t | F_t)` from the state of `path`
/// at time `t`, resimulating `cfg.n_inner` futures from `stream`.
pub fn nested_mc_z(
    scenario: ScenarioId,
    path: &SamplePath,
    tr: &RandomTimeResult,
    t: f64,
    cfg: &NestedMcConfig,
    stream: &RngStream,
) -> Result<NestedEstimate> {
    check_resolved(tr, scenario)?;
    if cfg.n_inner < 2 || !(cfg.dt > 0.0) {
        return Err(LabError::Config(format!("invalid nested settings {cfg:?}")));
    }
    let k = path.index_at(t);
    let x = path.values()[k];
    let n = cfg.n_inner;
    let mut rng = stream.rng();
    use ScenarioId::*;
    match scenario {
        S1ExcursionHonest => {
            let t1 = tr.aux_index(aux::T1).ok_or(LabError::Censored)?;
            if k >= t1 {
                return Ok(NestedEstimate {
                    estimate: 0.0,
                    se: 0.0,
                });
            }
            if x <= 0.0 {
                return Ok(NestedEstimate {
                    estimate: 1.0,
                    se: 0.0,
                });
            }
            let hits = (0..n)
                .filter(|_| exits_low(x, 0.0, 1.0, cfg.dt, &mut rng))
                .count();
            Ok(binomial(hits, n))
        }
        S2PiPseudo => {
            let t1 = tr.aux_index(aux::T1).ok_or(LabError::Censored)?;
            if k >= t1 {
                return Ok(NestedEstimate {
                    estimate: 0.0,
                    se: 0.0,
                });
            }
            let level = path.max_through(k);
            // The path reaches its current maximum again before 1 almost
            // surely, so futures start there: σ > t iff a zero follows before 1.
            let hits = (0..n)
                .filter(|_| exits_low(level, 0.0, 1.0, cfg.dt, &mut rng))
                .count();
            Ok(binomial(hits, n))
        }
        S3StoppedMaxHonest => {
            let nbar = path.max_through(k);
            if x <= 0.0 || path.absorbed_at().is_some_and(|a| k >= a) {
                return Ok(NestedEstimate {
                    estimate: 0.0,
                    se: 0.0,
                });
            }
            let dt = cfg.dt * nbar * nbar;
            let hits = (0..n)
                .filter(|_| !exits_low(x, 0.0, nbar, dt, &mut rng))
                .count();
            Ok(binomial(hits, n))
        }
        S6HalfBridge => {
            let s = 1.0 - path.time(k);
            if s <= 0.0 {
                return Ok(NestedEstimate {
                    estimate: 0.0,
                    se: 0.0,
                });
            }
            // Draw W_1, then the bridge from (t, W_t) to (1, W_1) touches
            // W_1 / 2 with a closed-form probability. Far from the level
            // (a = |x|/sqrt(s) > 1) the standardized endpoint is drawn from
            // an even mixture of U(-a, a) and exponential tails of rate a
            // beyond ±a, then reweighted, which keeps the weights bounded.
            let a = x.abs() / s.sqrt();
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    let (z, w) = if a > 1.0 {
                        let z: f64 = if rng.random::<f64>() < 0.5 {
                            a * (2.0 * rng.random::<f64>() - 1.0)
                        } else {
                            let side = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                            let e: f64 = rng.sample(Exp1);
                            side * (a + e / a)
                        };
                        let q = if z.abs() < a {
                            0.25 / a
                        } else {
                            0.25 * a * (-a * (z.abs() - a)).exp()
                        };
                        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                        (z, phi / q)
                    } else {
                        (rng.sample(StandardNormal), 1.0)
                    };
                    let w1 = x + s.sqrt() * z;
                    w * bridge_touch(x, w1, 0.5 * w1, s)
                })
                .collect();
            Ok(mean_estimate(&samples))
        }
        S7LastZeroUnit => {
            let s = 1.0 - path.time(k);
            if s <= 0.0 {
                return Ok(NestedEstimate {
                    estimate: 0.0,
                    se: 0.0,
                });
            }
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    let b1 = x + s.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    bridge_touch(x, b1, 0.0, s)
                })
                .collect();
            Ok(mean_estimate(&samples))
        }
        S4Invariance | S5ScaleDrift => Err(LabError::Unsupported {
            spec: "nested_mc_z".into(),
            scenario: scenario.code().into(),
        }),
    }
}

/// Nested estimate of the Azéma supermartingale under `Q = ρ·P` with
/// `ρ = log N̄_∞` on the honest-maximum scenario:
/// `E[ρ 1{σ>t} | F_t] / E[ρ | F_t]`, with a delta-method standard error.
pub fn nested_mc_z_q_log_max(
    path: &SamplePath,
    t: f64,
    cfg: &NestedMcConfig,
    stream: &RngStream,
) -> Result<NestedEstimate> {
    let k = path.index_at(t);
    let v = path.values();
    let x = v[k];
    let nbar = path.max_through(k);
    if x <= 0.0 {
        return Ok(NestedEstimate {
            estimate: 0.0,
            se: 0.0,
        });
    }
    let mut rng = stream.rng();
    let mut num = Vec::with_capacity(cfg.n_inner);
    let mut den = Vec::with_capacity(cfg.n_inner);
    for _ in 0..cfg.n_inner {
        let sup = sup_until_absorbed(x, cfg.dt, f64::INFINITY, &mut rng);
        let rho = sup.max(nbar).ln();
        den.push(rho);
        num.push(if sup > nbar { rho } else { 0.0 });
    }
    let sn: f64 = num.iter().sum();
    let sd: f64 = den.iter().sum();
    if sd <= 0.0 {
        return Err(LabError::DegenerateWeights {
            n_eff: 0.0,
            min: 1.0,
        });
    }
    let r = sn / sd;
    let ss: f64 = num
        .iter()
        .zip(&den)
        .map(|(a, b)| (a - r * b) * (a - r * b))
        .sum();
    Ok(NestedEstimate {
        estimate: r,
        se: ss.sqrt() / sd,
    })
}

/// Checks `E[F 1{σ>t}] = E[F Z_t]` through the paired differences
/// `F (1{σ>t} - Z_t)` on one ensemble.
pub fn push_to_infinity_check(
    after_t: &[bool],
    z_t: &[f64],
    functional: &[f64],
    k_sigma: f64,
) -> Result<TestReport> {
    if after_t.len() != z_t.len() || z_t.len() != functional.len() {
        return Err(LabError::Config(
            "push-to-infinity inputs differ in length".into(),
        ));
    }
    let diffs: Vec<f64> = after_t
        .iter()
        .zip(z_t)
        .zip(functional)
        .map(|((&e, &z), &f)| f * (if e { 1.0 } else { 0.0 } - z))
        .collect();
    Ok(mean_test(&diffs, None, 0.0, k_sigma)?.named("push_to_infinity"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_engine::{
        sample_absorbed, sample_bm, sample_to_level_one, RunConfig, TimeGrid,
    };
    use crate::random_times::detect;
    use proptest::prelude::*;

    fn check_invariants(b: &SupermartingaleBundle, tol: f64) {
        assert_eq!(b.z[0], 1.0);
        assert_eq!(b.a[0], 0.0);
        assert_eq!(b.d[0], 1.0);
        assert!((b.n[0] - 1.0).abs() < 1e-12);
        for k in 0..b.len() {
            assert!(
                (0.0..=1.0).contains(&b.z[k]),
                "Z out of range at {k}: {}",
                b.z[k]
            );
            if k > 0 {
                assert!(b.a[k] >= b.a[k - 1]);
                assert!(b.d[k] <= b.d[k - 1]);
            }
            if b.d[k] > 1e-300 && b.z[k] > 0.0 {
                let rel = (b.n[k] * b.d[k] - b.z[k]).abs() / b.z[k];
                assert!(rel < tol, "Z != N D at {k}: rel {rel}");
            }
        }
    }

    fn excursion(seed: u64, i: u64) -> SamplePath {
        sample_to_level_one(&RunConfig::new(1e-3, 1.0, 50.0), &RngStream::new(seed, i)).unwrap()
    }

    #[test]
    fn pseudo_bundle_starts_normalized() {
        let p = excursion(1, 0);
        let tr = detect(ScenarioId::S2PiPseudo, &p).unwrap();
        let b = closed_form_bundle(ScenarioId::S2PiPseudo, &p, &tr).unwrap();
        assert_eq!((b.z[0], b.a[0], b.n[0], b.d[0]), (1.0, 0.0, 1.0, 1.0));
        check_invariants(&b, 1e-12);
        assert!(b.z.iter().zip(&b.a).all(|(z, a)| z + a == 1.0));
    }

    #[test]
    fn honest_max_bundle_factorizes_exactly() {
        let cfg = RunConfig::new(1e-3, 1.0, 50.0);
        for i in 0..10 {
            let p = sample_absorbed(&cfg, &RngStream::new(2, i)).unwrap();
            let tr = detect(ScenarioId::S3StoppedMaxHonest, &p).unwrap();
            if tr.censored {
                continue;
            }
            let b = closed_form_bundle(ScenarioId::S3StoppedMaxHonest, &p, &tr).unwrap();
            for k in 0..b.len() {
                let nbar = b.d[k].recip();
                assert!((nbar * b.z[k] - p.values()[k]).abs() <= 1e-12 * nbar);
                assert!((b.n[k] * b.d[k] - b.z[k]).abs() <= 1e-9 * b.z[k].max(1e-300));
            }
        }
    }

    #[test]
    fn half_bridge_z_at_zero_state_is_one() {
        assert!((half_bridge_z(0.0) - 1.0).abs() < 1e-15);
        assert!(half_bridge_z(3.0) < half_bridge_z(1.0));
        assert!(half_bridge_z(40.0) >= 0.0);
    }

    #[test]
    fn all_closed_form_bundles_satisfy_invariants() {
        let grid = TimeGrid::covering(1e-3, 1.0).unwrap();
        for i in 0..5 {
            let s1 = excursion(3, i);
            for sc in [ScenarioId::S1ExcursionHonest, ScenarioId::S2PiPseudo] {
                let tr = detect(sc, &s1).unwrap();
                check_invariants(&closed_form_bundle(sc, &s1, &tr).unwrap(), 1e-9);
            }
            let w = sample_bm(grid, &RngStream::new(4, i), 0.0, 0.0, false);
            for sc in [ScenarioId::S6HalfBridge, ScenarioId::S7LastZeroUnit] {
                let tr = detect(sc, &w).unwrap();
                check_invariants(&closed_form_bundle(sc, &w, &tr).unwrap(), 1e-9);
            }
            let m =
                sample_absorbed(&RunConfig::new(1e-3, 1.0, 50.0), &RngStream::new(5, i)).unwrap();
            let tr = detect(ScenarioId::S4Invariance, &m).unwrap();
            if !tr.censored {
                check_invariants(
                    &closed_form_bundle(ScenarioId::S4Invariance, &m, &tr).unwrap(),
                    1e-12,
                );
            }
        }
    }

    #[test]
    fn counterexample_closed_forms() {
        let p = SamplePath::uniform(0.1, vec![1.0, 1.5, 2.0, 1.2, 0.5, 0.0]).unwrap();
        let q = counterexample_bundle(&p);
        assert_eq!((q.rho_t[0], q.z_q[0], q.d_q[0]), (1.0, 1.0, 1.0));
        for k in 0..p.len() {
            let nbar = p.values()[..=k].iter().copied().fold(0.0, f64::max);
            let dp = 1.0 / nbar;
            assert!((q.d_q[k] / dp - (1.0 + nbar.ln())).abs() < 1e-12);
            assert!((q.n_q[k] * q.d_q[k] - q.z_q[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_estimate_matches_excursion_closed_form() {
        // hand-built prefix at B_t = 0.5 with max 0.7 < 1
        let mut v: Vec<f64> = (0..=7).map(|k| k as f64 * 0.1).collect();
        v.extend([0.6, 0.5, 1.2]);
        let p = SamplePath::uniform(0.1, v).unwrap();
        let tr = detect(ScenarioId::S1ExcursionHonest, &p).unwrap();
        let cfg = NestedMcConfig {
            n_inner: 4000,
            dt: 1e-3,
        };
        let e = nested_mc_z(
            ScenarioId::S1ExcursionHonest,
            &p,
            &tr,
            0.9,
            &cfg,
            &RngStream::new(6, 0),
        )
        .unwrap();
        assert!((e.estimate - 0.5).abs() < 3.0 * e.se, "{e:?}");
        let e0 = nested_mc_z(
            ScenarioId::S1ExcursionHonest,
            &p,
            &tr,
            0.0,
            &cfg,
            &RngStream::new(6, 1),
        )
        .unwrap();
        assert_eq!(e0.estimate, 1.0);
    }

    #[test]
    fn push_to_infinity_rejects_wrong_z() {
        let ev = vec![true, false, true, false];
        let ok = push_to_infinity_check(&ev, &[1.0, 0.0, 1.0, 0.0], &[1.0; 4], 3.0).unwrap();
        assert!(ok.pass);
        let bad = push_to_infinity_check(&[true; 4], &[0.5; 4], &[1.0; 4], 3.0).unwrap();
        assert!(!bad.pass);
    }

    proptest! {
        #[test]
        fn decreasing_factor_is_monotone(steps in prop::collection::vec((0.0f64..0.1, 0.0f64..1.0), 1..50)) {
            let mut a = vec![0.0];
            let mut z = vec![1.0];
            for (da, zz) in steps {
                a.push(a.last().unwrap() + da);
                z.push(zz);
            }
            let d = multiplicative_decreasing_factor(&z, &a);
            prop_assert_eq!(d[0], 1.0);
            for w in d.windows(2) {
                prop_assert!(w[1] <= w[0] && w[1] >= 0.0);
            }
        }

        #[test]
        fn scale_function_is_increasing_and_tends_to_identity(b in 0.01f64..2.0, x in 0.0f64..1.0) {
            prop_assert!(scale_function(b, x) <= x + 1e-15);
            prop_assert!(scale_function(b, x + 0.01) > scale_function(b, x));
            prop_assert!((scale_function(1e-9, x) - x).abs() < 1e-8);
        }
    }
}
