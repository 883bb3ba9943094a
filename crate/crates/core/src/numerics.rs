//! Scalar numerics: Gaussian special functions, adaptive Simpson quadrature
//! and bisection.

use crate::error::{LabError, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// sqrt(2/pi) = E|G| for a standard Gaussian G.
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function 1 - Phi(x), accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Exact value of `int_a^inf x^2 exp(-x^2/2) dx`, valid for any real `a`.
///
/// Integration by parts gives `a e^{-a^2/2} + int_a^inf e^{-x^2/2} dx`.
pub fn gaussian_second_moment_tail(a: f64) -> f64 {
    if a == f64::INFINITY {
        return 0.0;
    }
    a * (-0.5 * a * a).exp() + (PI / 2.0).sqrt() * libm::erfc(a * FRAC_1_SQRT_2)
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(LabError::Config(format!(
            "non-finite quadrature bounds [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    // Split the range first so narrow features are not missed by the initial rule.
    const PANELS: usize = 8;
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + width * i as f64;
        let hi = if i + 1 == PANELS { b } else { lo + width };
        let fa = f(lo);
        let fb = f(hi);
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(
            &f,
            lo,
            hi,
            fa,
            fm,
            fb,
            whole,
            tol / PANELS as f64,
            MAX_DEPTH,
        )?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(LabError::Domain(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    if delta.abs() <= 15.0 * tol || depth == 0 || (b - a) < 1e-15 {
        return Ok(left + right + delta / 15.0);
    }
    Ok(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Root of a continuous `f` on `[lo, hi]` by bisection, to bracket width `tol`.
///
/// Fails with a configuration error when `f(lo)` and `f(hi)` share a sign.
pub fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(LabError::Config(format!(
            "bisection does not bracket a root: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// SplitMix64 finalizer; used to derive independent keys from seeds and indices.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_moment_tail_at_zero_is_half_sqrt_two_pi() {
        // int_0^inf x^2 e^{-x^2/2} dx = sqrt(pi/2)
        let v = gaussian_second_moment_tail(0.0);
        assert!((v - (PI / 2.0).sqrt()).abs() < 1e-15);
        assert!((SQRT_2_OVER_PI * v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn second_moment_tail_matches_quadrature() {
        for &a in &[0.0, 0.3, 1.0, 2.5, 4.0] {
            let q = adaptive_simpson(|x| x * x * (-0.5 * x * x).exp(), a, a + 40.0, 1e-13).unwrap();
            assert!(
                (q - gaussian_second_moment_tail(a)).abs() < 1e-10,
                "a = {a}"
            );
        }
        assert_eq!(gaussian_second_moment_tail(f64::INFINITY), 0.0);
    }

    #[test]
    fn simpson_integrates_polynomials_and_exponentials() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| (-x).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let v = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn bisection_finds_sqrt_two_and_rejects_bad_bracket() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(matches!(
            bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-10),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn normal_cdf_and_sf_are_complementary() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.0] {
            assert!((norm_cdf(x) + norm_sf(x) - 1.0).abs() < 1e-15);
        }
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }
}
