//! Density families `ρ`, the induced processes `h_t = E[ρ 1{σ>t} | F_t]`,
//! `k_t = E[ρ 1{σ<=t} | F_t]` and the hazard `μ^F`, predicted drifts of the
//! driving process before and after σ, the deflator `1/N_{t∧σ}`, and the
//! invariance construction built from a function `g` on `[0, 1]`.

use crate::azema::{scale_function, Z_FLOOR};
use crate::error::{LabError, Result};
use crate::numerics::{adaptive_simpson, bisect, norm_cdf, SQRT_2_OVER_PI};
use crate::path_engine::SamplePath;
use crate::random_times::{aux, relative_to_max, RandomTimeResult, ScenarioId};
use crate::stat_tests::{weighted_mean, TestReport};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Absolute tolerance of every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-12;
/// Accepted normalization error of `f` and `g`.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Drift denominators below this are treated as singular.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;
/// Upper end used for integrals over the half line (`e^{-60}` is negligible).
const HALF_LINE_END: f64 = 60.0;

/// Named profile functions with closed-form tail integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NamedFn {
    /// `f(x) = 1`
    One,
    /// `f(x) = 2x`
    TwoX,
    /// `f(x) = x`
    X,
    /// `f(x) = 2 e^{-x}`
    TwoExpNeg,
}

impl NamedFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            NamedFn::One => 1.0,
            NamedFn::TwoX => 2.0 * x,
            NamedFn::X => x,
            NamedFn::TwoExpNeg => 2.0 * (-x).exp(),
        }
    }

    /// `∫_a^1 f`.
    fn unit_tail(self, a: f64) -> f64 {
        match self {
            NamedFn::One => 1.0 - a,
            NamedFn::TwoX => 1.0 - a * a,
            NamedFn::X => 0.5 * (1.0 - a * a),
            NamedFn::TwoExpNeg => 2.0 * ((-a).exp() - (-1.0f64).exp()),
        }
    }

    /// `∫_a^∞ f(x) e^{-x} dx`.
    fn exp_tail(self, a: f64) -> f64 {
        match self {
            NamedFn::One => (-a).exp(),
            NamedFn::TwoX => 2.0 * (1.0 + a) * (-a).exp(),
            NamedFn::X => (1.0 + a) * (-a).exp(),
            NamedFn::TwoExpNeg => (-2.0 * a).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedFn::One => "one",
            NamedFn::TwoX => "two_x",
            NamedFn::X => "x",
            NamedFn::TwoExpNeg => "two_exp_neg",
        }
    }
}

impl FromStr for NamedFn {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one" | "1" => Ok(NamedFn::One),
            "two_x" | "2x" => Ok(NamedFn::TwoX),
            "x" => Ok(NamedFn::X),
            "two_exp_neg" | "2exp(-x)" => Ok(NamedFn::TwoExpNeg),
            other => Err(LabError::Config(format!("unknown function '{other}'"))),
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A positive profile `f`, either named or an arbitrary closure whose tail
/// integrals are then computed by quadrature.
#[derive(Clone)]
pub enum ProfileFn {
    Named(NamedFn),
    Custom { name: String, f: RealFn },
}

impl fmt::Debug for ProfileFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProfileFn({})", self.name())
    }
}

impl ProfileFn {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ProfileFn::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ProfileFn::Named(n) => n.name().to_string(),
            ProfileFn::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ProfileFn::Named(n) => n.eval(x),
            ProfileFn::Custom { f, .. } => f(x),
        }
    }

    /// `∫_a^1 f`.
    pub fn unit_tail(&self, a: f64) -> Result<f64> {
        match self {
            ProfileFn::Named(n) => Ok(n.unit_tail(a)),
            ProfileFn::Custom { f, .. } => adaptive_simpson(|x| f(x), a, 1.0, QUAD_TOL),
        }
    }

    /// `∫_a^∞ f(x) e^{-x} dx`.
    pub fn exp_tail(&self, a: f64) -> Result<f64> {
        match self {
            ProfileFn::Named(n) => Ok(n.exp_tail(a)),
            ProfileFn::Custom { f, .. } => {
                if a >= HALF_LINE_END {
                    return Ok(0.0);
                }
                adaptive_simpson(|x| f(x) * (-x).exp(), a, HALF_LINE_END, QUAD_TOL)
            }
        }
    }

    /// Checks `∫_0^1 f = 1` by quadrature.
    pub fn check_unit_normalized(&self) -> Result<()> {
        let total = adaptive_simpson(|x| self.eval(x), 0.0, 1.0, QUAD_TOL)?;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LabError::Config(format!(
                "∫_0^1 {} = {total}, expected 1",
                self.name()
            )));
        }
        Ok(())
    }

    /// Checks `∫_0^∞ f(x) e^{-x} dx = 1` by quadrature.
    pub fn check_exp_normalized(&self) -> Result<()> {
        let total = adaptive_simpson(|x| self.eval(x) * (-x).exp(), 0.0, HALF_LINE_END, QUAD_TOL)?;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LabError::Config(format!(
                "∫_0^∞ {} e^(-x) dx = {total}, expected 1",
                self.name()
            )));
        }
        Ok(())
    }
}

/// `g` on `[0, 1]` for the invariance construction.
#[derive(Clone)]
pub enum GFn {
    Zero,
    /// `g(x) = x - c`, with `c` fixed by the normalization.
    XMinusC(f64),
    Custom {
        name: String,
        g: RealFn,
    },
}

impl fmt::Debug for GFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GFn({})", self.name())
    }
}

impl GFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GFn::Zero => 0.0,
            GFn::XMinusC(c) => x - c,
            GFn::Custom { g, .. } => g(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            GFn::Zero => "zero".into(),
            GFn::XMinusC(c) => format!("x_minus_c({c:.12})"),
            GFn::Custom { name, .. } => name.clone(),
        }
    }

    /// `∫_z^1 g`.
    pub fn upper_integral(&self, z: f64) -> Result<f64> {
        match self {
            GFn::Zero => Ok(0.0),
            GFn::XMinusC(c) => Ok(0.5 * (1.0 - z * z) - c * (1.0 - z)),
            GFn::Custom { g, .. } => adaptive_simpson(|y| g(y), z, 1.0, QUAD_TOL),
        }
    }
}

/// Residual `∫_0^1 exp((1 - z²)/2 - c(1 - z)) dz - 1`.
pub fn x_minus_c_residual(c: f64) -> Result<f64> {
    Ok(adaptive_simpson(
        |z| (0.5 * (1.0 - z * z) - c * (1.0 - z)).exp(),
        0.0,
        1.0,
        QUAD_TOL,
    )? - 1.0)
}

/// Solves for `c` by bisection; returns `(c, residual)`.
pub fn solve_x_minus_c() -> Result<(f64, f64)> {
    let c = bisect(x_minus_c_residual, 0.0, 5.0, 1e-14)?;
    Ok((c, x_minus_c_residual(c)?))
}

/// Points in the tabulated `h`.
const H_TABLE_POINTS: usize = 4097;

/// The invariance construction for a normalized `g`:
/// `h(x) = ∫_0^x exp(∫_z^1 g)`, tabulated for fast evaluation.
#[derive(Clone, Debug)]
pub struct Invariance {
    g: GFn,
    table: Vec<f64>,
    normalization: f64,
}

impl Invariance {
    pub fn new(g: GFn) -> Result<Self> {
        let norm = adaptive_simpson(
            |z| g.upper_integral(z).map(f64::exp).unwrap_or(f64::NAN),
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(LabError::Config(format!(
                "∫_0^1 exp(∫_z^1 g) dz = {norm} for g = {}",
                g.name()
            )));
        }
        let n = H_TABLE_POINTS - 1;
        let step = 1.0 / n as f64;
        let mut table = Vec::with_capacity(H_TABLE_POINTS);
        let mut acc = 0.0;
        table.push(0.0);
        for i in 0..n {
            let (lo, hi) = (i as f64 * step, (i + 1) as f64 * step);
            acc += adaptive_simpson(
                |z| g.upper_integral(z).map(f64::exp).unwrap_or(f64::NAN),
                lo,
                hi,
                QUAD_TOL / n as f64,
            )?;
            table.push(acc);
        }
        Ok(Invariance {
            g,
            table,
            normalization: norm,
        })
    }

    /// The `g(x) = x - c` instance with `c` from [`solve_x_minus_c`].
    pub fn x_minus_c() -> Result<Self> {
        let (c, _) = solve_x_minus_c()?;
        Invariance::new(GFn::XMinusC(c))
    }

    pub fn g(&self) -> &GFn {
        &self.g
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `h(x)` for `x ∈ [0, 1]` by linear interpolation in the table.
    pub fn h(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let n = (H_TABLE_POINTS - 1) as f64;
        let pos = x * n;
        let i = (pos as usize).min(H_TABLE_POINTS - 2);
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }

    /// `h(x)` by direct quadrature (any real `x`).
    pub fn h_exact(&self, x: f64) -> Result<f64> {
        adaptive_simpson(
            |z| self.g.upper_integral(z).map(f64::exp).unwrap_or(f64::NAN),
            0.0,
            x,
            QUAD_TOL,
        )
    }

    /// `h'(x)` from the quadrature `h` by a Richardson-extrapolated central difference.
    pub fn h_prime_numeric(&self, x: f64) -> Result<f64> {
        let d = |e: f64| -> Result<f64> {
            Ok((self.h_exact(x + e)? - self.h_exact(x - e)?) / (2.0 * e))
        };
        let e = 1e-3;
        Ok((4.0 * d(e / 2.0)? - d(e)?) / 3.0)
    }

    /// `log ρ` along an absorbed driving path `M`, accumulated as the discrete
    /// stochastic exponential of `∫ g(M/M̄) dM / (2M̄)` with the exact Gaussian
    /// compensator `½ g² dt / (4 M̄²)` on each step.
    pub fn log_weight(&self, path: &SamplePath) -> f64 {
        let v = path.values();
        let mut mbar = v[0];
        let mut acc = 0.0;
        for k in 1..v.len() {
            let prev = v[k - 1];
            if prev <= 0.0 {
                break;
            }
            let gv = self.g.eval(prev / mbar);
            let coef = gv / (2.0 * mbar);
            acc += coef * (v[k] - prev) - 0.5 * coef * coef * path.step_dt(k);
            mbar = mbar.max(v[k]);
        }
        acc
    }
}

/// Density families.
#[derive(Clone, Debug)]
pub enum MeasureChangeSpec {
    /// `ρ = f(A_σ)` for a pseudo-stopping time, `∫_0^1 f = 1`.
    FOfAPseudo(ProfileFn),
    /// `ρ = M_σ` with `M = 1 + B` stopped when `B` leaves `(-1, 1)`.
    MSigma,
    /// `ρ = f(A_σ)` for an honest time, `∫_0^∞ f e^{-x} = 1`.
    FOfAHonest(ProfileFn),
    /// `ρ = f(1 - inf_{u<=σ} Z_u)` for the last zero before the first passage at 1.
    GeneralizedPi(ProfileFn),
    /// `ρ = 2 Z_σ` for the pseudo-stopping time π.
    TwoZSigma,
    /// `ρ = log N̄_∞`.
    LogNbar,
    /// Stochastic exponential of `∫ g(M/M̄) dM/(2M̄)`.
    StochExpG(Arc<Invariance>),
    /// `ρ = |B_1| / sqrt(2/π)` for the last zero before time 1.
    AbsB1,
}

impl MeasureChangeSpec {
    /// Builds a spec, checking the normalization of its profile function.
    pub fn checked(self) -> Result<Self> {
        match &self {
            MeasureChangeSpec::FOfAPseudo(f) | MeasureChangeSpec::GeneralizedPi(f) => {
                f.check_unit_normalized()?
            }
            MeasureChangeSpec::FOfAHonest(f) => f.check_exp_normalized()?,
            _ => {}
        }
        Ok(self)
    }

    pub fn name(&self) -> String {
        match self {
            MeasureChangeSpec::FOfAPseudo(f) => format!("f_of_A_pseudo[{}]", f.name()),
            MeasureChangeSpec::MSigma => "M_sigma".into(),
            MeasureChangeSpec::FOfAHonest(f) => format!("f_of_A_honest[{}]", f.name()),
            MeasureChangeSpec::GeneralizedPi(f) => format!("generalized_pi[{}]", f.name()),
            MeasureChangeSpec::TwoZSigma => "two_Z_sigma".into(),
            MeasureChangeSpec::LogNbar => "log_Nbar".into(),
            MeasureChangeSpec::StochExpG(inv) => format!("stoch_exp_g[{}]", inv.g().name()),
            MeasureChangeSpec::AbsB1 => "abs_B1".into(),
        }
    }

    fn unsupported(&self, scenario: ScenarioId) -> LabError {
        LabError::Unsupported {
            spec: self.name(),
            scenario: scenario.code().into(),
        }
    }
}

fn resolved(tr: &RandomTimeResult) -> Result<()> {
    if tr.censored {
        Err(LabError::Censored)
    } else {
        Ok(())
    }
}

/// `A_σ` of a pseudo-stopping scenario (the value uniform on `[0, 1]`).
pub fn pseudo_a_at_sigma(
    scenario: ScenarioId,
    path: &SamplePath,
    tr: &RandomTimeResult,
    scale_drift: f64,
) -> Result<f64> {
    resolved(tr)?;
    let v = path.values();
    match scenario {
        ScenarioId::S2PiPseudo => Ok(path.max_through(tr.sigma_index).min(1.0)),
        ScenarioId::S5ScaleDrift => {
            let m = path.max_through(tr.sigma_index);
            Ok((scale_function(scale_drift, m) / scale_function(scale_drift, 1.0)).clamp(0.0, 1.0))
        }
        ScenarioId::S4Invariance => {
            let r = relative_to_max(&v[..=tr.sigma_index]);
            Ok(1.0 - r.iter().copied().fold(f64::INFINITY, f64::min))
        }
        other => Err(LabError::Unsupported {
            spec: "pseudo A_sigma".into(),
            scenario: other.code().into(),
        }),
    }
}

/// Index at which `M = 1 + B` is stopped: the first time `B` reaches `-1`,
/// or the first passage at 1.
pub fn m_sigma_stop(path: &SamplePath, tr: &RandomTimeResult) -> Option<usize> {
    let low = path.first_at_or_below(-1.0);
    let high = tr.aux_index(aux::T1);
    match (low, high) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// `M_t = 1 + B_{t∧τ}` at index `k`; 0 once `B` reached -1, 2 once it reached 1.
pub fn m_sigma_value(path: &SamplePath, stop: Option<usize>, k: usize) -> f64 {
    match stop {
        Some(s) if k >= s => {
            if path.values()[s] >= 1.0 {
                2.0
            } else {
                0.0
            }
        }
        _ => 1.0 + path.values()[k],
    }
}

/// Per-path density `ρ`.
pub fn weight(
    spec: &MeasureChangeSpec,
    scenario: ScenarioId,
    path: &SamplePath,
    tr: &RandomTimeResult,
) -> Result<f64> {
    resolved(tr)?;
    use MeasureChangeSpec::*;
    use ScenarioId::*;
    let v = path.values();
    match (spec, scenario) {
        (FOfAPseudo(f), S2PiPseudo | S4Invariance | S5ScaleDrift) => Ok(f.eval(pseudo_a_at_sigma(
            scenario,
            path,
            tr,
            crate::azema::DEFAULT_SCALE_DRIFT,
        )?)),
        (MSigma, S2PiPseudo) => Ok(m_sigma_value(path, m_sigma_stop(path, tr), tr.sigma_index)),
        (FOfAHonest(f), S3StoppedMaxHonest) => Ok(f.eval(path.max_through(tr.sigma_index).ln())),
        (GeneralizedPi(f), S1ExcursionHonest) => {
            Ok(f.eval(path.max_through(tr.sigma_index).clamp(0.0, 1.0)))
        }
        (TwoZSigma, S2PiPseudo) => Ok(2.0 * (1.0 - path.max_through(tr.sigma_index).min(1.0))),
        (LogNbar, S3StoppedMaxHonest) => Ok(path.max_through(tr.sigma_index).ln()),
        (StochExpG(inv), S4Invariance) => Ok(inv.log_weight(path).exp()),
        (AbsB1, S7LastZeroUnit) => {
            let h = tr.aux_index(aux::HORIZON).ok_or(LabError::Censored)?;
            Ok(v[h].abs() / SQRT_2_OVER_PI)
        }
        _ => Err(spec.unsupported(scenario)),
    }
}

/// `h` and `μ^F` along a path (not stopped at σ; callers stop at `σ ∧ t`).
#[derive(Clone, Debug, PartialEq)]
pub struct HazardPath {
    pub h: Vec<f64>,
    pub mu_f: Vec<f64>,
}

/// `ρ_t`, `h_t` and `k_t` for `ρ = |B_1|/sqrt(2/π)` at state `(t, x)`, `t < 1`.
pub fn abs_b1_processes(t: f64, x: f64) -> (f64, f64, f64) {
    let s = (1.0 - t).max(0.0);
    let ax = x.abs();
    if s == 0.0 {
        return (ax / SQRT_2_OVER_PI, 0.0, ax / SQRT_2_OVER_PI);
    }
    let a = ax / s.sqrt();
    let phi = norm_cdf(a);
    let gauss = (2.0 * s / PI).sqrt() * (-0.5 * a * a).exp();
    let rho = ax * (2.0 * phi - 1.0) + gauss;
    let h = 2.0 * ax * (phi - 1.0) + gauss;
    (
        rho / SQRT_2_OVER_PI,
        h / SQRT_2_OVER_PI,
        ax / SQRT_2_OVER_PI,
    )
}

/// Closed-form `h_t` and `μ^F_t` along `path`.
pub fn h_and_mu_f(
    spec: &MeasureChangeSpec,
    scenario: ScenarioId,
    path: &SamplePath,
    tr: &RandomTimeResult,
) -> Result<HazardPath> {
    resolved(tr)?;
    use MeasureChangeSpec::*;
    use ScenarioId::*;
    let v = path.values();
    let n = v.len();
    let stop = |k: usize, s: Option<usize>| s.map_or(k, |s| k.min(s));
    let mut h = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    match (spec, scenario) {
        (FOfAPseudo(_), S2PiPseudo) | (TwoZSigma, S2PiPseudo) | (MSigma, S2PiPseudo) => {
            let t1 = tr.aux_index(aux::T1);
            let m_stop = m_sigma_stop(path, tr);
            let mut mx = f64::NEG_INFINITY;
            for k in 0..n {
                mx = mx.max(path.step_max(stop(k, t1)));
                let a = mx.min(1.0);
                let z = 1.0 - a;
                let (hk, muk) = match spec {
                    FOfAPseudo(f) => {
                        let tail = f.unit_tail(a)?;
                        (tail, -tail.max(Z_FLOOR).ln())
                    }
                    TwoZSigma => (z * z, -2.0 * z.max(Z_FLOOR).ln()),
                    _ => (m_sigma_value(path, m_stop, k) * z, -z.max(Z_FLOOR).ln()),
                };
                h.push(hk);
                mu.push(muk);
            }
        }
        (FOfAHonest(_), S3StoppedMaxHonest) | (LogNbar, S3StoppedMaxHonest) => {
            let f = match spec {
                FOfAHonest(f) => f.clone(),
                _ => ProfileFn::Named(NamedFn::X),
            };
            let mut mx = f64::NEG_INFINITY;
            for (k, &x) in v.iter().enumerate() {
                mx = mx.max(path.step_max(k));
                let tail = f.exp_tail(mx.ln())?;
                h.push(x * tail);
                mu.push(-tail.max(Z_FLOOR).ln());
            }
        }
        (GeneralizedPi(f), S1ExcursionHonest) => {
            let t1 = tr.aux_index(aux::T1);
            let lt = path.local_time_at_zero();
            let l = lt.values();
            let mut mx = f64::NEG_INFINITY;
            let mut acc = 0.0;
            for k in 0..n {
                let kk = stop(k, t1);
                mx = mx.max(path.step_max(kk));
                let bbar = mx.clamp(0.0, 1.0);
                let fb = f.eval(bbar);
                let tail = f.unit_tail(bbar)?;
                if k >= 1 && kk == k {
                    let dl = l[k] - l[k - 1];
                    if dl > 0.0 {
                        acc += fb * 0.5 * dl / (tail + fb * bbar).max(SINGULAR_DENOMINATOR);
                    }
                }
                h.push(tail + fb * (bbar - v[kk].max(0.0)));
                mu.push(acc);
            }
        }
        (StochExpG(inv), S4Invariance) => {
            let mut mbar = v[0];
            let mut inf = f64::INFINITY;
            let mut log_rho = 0.0;
            for k in 0..n {
                if k >= 1 && v[k - 1] > 0.0 {
                    let coef = inv.g().eval(v[k - 1] / mbar) / (2.0 * mbar);
                    log_rho += coef * (v[k] - v[k - 1]) - 0.5 * coef * coef * path.step_dt(k);
                }
                mbar = mbar.max(v[k]);
                inf = inf.min(v[k] / mbar);
                let zq = inv.h(inf);
                h.push(log_rho.exp() * zq);
                mu.push(-zq.max(Z_FLOOR).ln());
            }
        }
        (AbsB1, S7LastZeroUnit) => {
            let hz = tr.aux_index(aux::HORIZON).ok_or(LabError::Censored)?;
            let lt = path.local_time_at_zero();
            let l = lt.values();
            let mut acc = 0.0;
            for k in 0..n {
                let kk = k.min(hz);
                if k >= 1 && k <= hz {
                    let dl = l[k] - l[k - 1];
                    if dl > 0.0 {
                        // h on {B = 0} equals sqrt(2(1-t)/π) / sqrt(2/π) = sqrt(1-t)
                        let s = (1.0 - path.time(k - 1)).max(Z_FLOOR);
                        acc += dl / SQRT_2_OVER_PI / s.sqrt();
                    }
                }
                let (_, hk, _) = abs_b1_processes(path.time(kk).min(1.0), v[kk]);
                h.push(hk);
                mu.push(acc);
            }
        }
        _ => return Err(spec.unsupported(scenario)),
    }
    Ok(HazardPath { h, mu_f: mu })
}

/// Pre- or post-σ regime of a drift prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    PreSigma,
    PostSigma,
}

/// State at which a drift is predicted. `running_max` is the running maximum
/// of the driving process (and `aux` carries `M` for the `M_σ` density).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftState {
    pub t: f64,
    pub x: f64,
    pub running_max: f64,
    pub regime: Regime,
    pub aux: f64,
}

impl DriftState {
    pub fn new(t: f64, x: f64, running_max: f64, regime: Regime) -> Self {
        DriftState {
            t,
            x,
            running_max,
            regime,
            aux: f64::NAN,
        }
    }
}

fn nonsingular(d: f64) -> Result<f64> {
    if d.abs() < SINGULAR_DENOMINATOR || !d.is_finite() {
        Err(LabError::Domain(format!(
            "singular drift denominator {d:e}"
        )))
    } else {
        Ok(d)
    }
}

/// Drift of the driving process under `Q` in the enlarged filtration.
///
/// Before σ this is `d<U, h>/h`; after σ it is `d<U, k>/k`, which for the
/// last-zero times is `+1/B` (the drift of BM conditioned never to return to 0).
pub fn predicted_drift(
    spec: &MeasureChangeSpec,
    scenario: ScenarioId,
    state: DriftState,
) -> Result<f64> {
    use MeasureChangeSpec::*;
    use ScenarioId::*;
    let DriftState {
        t,
        x,
        running_max,
        regime,
        aux,
    } = state;
    match (spec, scenario, regime) {
        (GeneralizedPi(f), S1ExcursionHonest, Regime::PreSigma) => {
            if x <= 0.0 {
                return Ok(0.0);
            }
            let bbar = running_max.clamp(0.0, 1.0);
            let fb = f.eval(bbar);
            let den = nonsingular(f.unit_tail(bbar)? + fb * (bbar - x))?;
            Ok(-fb / den)
        }
        (GeneralizedPi(_), S1ExcursionHonest, Regime::PostSigma)
        | (AbsB1, S7LastZeroUnit, Regime::PostSigma) => Ok(1.0 / nonsingular(x)?),
        (AbsB1, S7LastZeroUnit, Regime::PreSigma) => {
            let s = 1.0 - t;
            if s <= 0.0 {
                return Err(LabError::Domain("drift requested at t >= 1".into()));
            }
            let ax = x.abs();
            let a = ax / s.sqrt();
            let pm = norm_cdf(a) - 1.0;
            let den = nonsingular(ax * pm + (s / (2.0 * PI)).sqrt() * (-0.5 * a * a).exp())?;
            Ok(x.signum() * pm / den)
        }
        (FOfAPseudo(_), S2PiPseudo, Regime::PreSigma)
        | (TwoZSigma, S2PiPseudo, Regime::PreSigma) => Ok(0.0),
        (MSigma, S2PiPseudo, Regime::PreSigma) => {
            if aux.is_nan() {
                return Err(LabError::Config(
                    "M_sigma drift needs the current M in DriftState::aux".into(),
                ));
            }
            Ok(1.0 / nonsingular(aux)?)
        }
        (FOfAHonest(_), S3StoppedMaxHonest, Regime::PreSigma)
        | (LogNbar, S3StoppedMaxHonest, Regime::PreSigma) => Ok(1.0 / nonsingular(x)?),
        (StochExpG(inv), S4Invariance, Regime::PreSigma) => {
            let m = nonsingular(running_max)?;
            Ok(inv.g().eval(x / m) / (2.0 * m))
        }
        _ => Err(spec.unsupported(scenario)),
    }
}

/// `1/N_{t∧σ}` along an honest-maximum path, with its terminal value `1/N̄_∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct Deflator {
    pub values: Vec<f64>,
    pub terminal: f64,
}

/// Guard on `N` when inverting.
pub const DEFLATOR_FLOOR: f64 = 1e-12;

pub fn deflator(path: &SamplePath, tr: &RandomTimeResult) -> Result<Deflator> {
    resolved(tr)?;
    if tr.scenario != ScenarioId::S3StoppedMaxHonest {
        return Err(LabError::Unsupported {
            spec: "deflator".into(),
            scenario: tr.scenario.code().into(),
        });
    }
    let v = path.values();
    let sigma = tr.sigma_index;
    // frozen at the path maximum, which on bridge-monitored paths lies inside step σ
    let terminal = 1.0 / path.max_through(sigma).max(DEFLATOR_FLOOR);
    let values: Vec<f64> = (0..v.len())
        .map(|k| {
            if k < sigma {
                1.0 / v[k].max(DEFLATOR_FLOOR)
            } else {
                terminal
            }
        })
        .collect();
    Ok(Deflator { values, terminal })
}

/// Per-path densities of an ensemble, with the number of censored paths left out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedEnsemble {
    pub weights: Vec<f64>,
    pub censored: usize,
}

impl WeightedEnsemble {
    pub fn effective_size(&self) -> f64 {
        crate::stat_tests::effective_sample_size(&self.weights)
    }

    /// `E[ρ] = 1` within `k_sigma` standard errors.
    pub fn mean_one_report(&self, k_sigma: f64) -> Result<TestReport> {
        let m = weighted_mean(&self.weights, None)?;
        Ok(TestReport::new(
            "mean_rho",
            (m.mean - 1.0).abs(),
            m.se,
            k_sigma * m.se,
            m.n_effective,
        )
        .detail(format!("mean={:.6e}", m.mean)))
    }
}
