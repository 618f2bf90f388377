//! Exponents of the self-similar corner profiles as functions of the
//! restitution coefficient, and the constants derived from them.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{KfpError, Result};
use crate::specfun::cos_pi;

/// Lower end of the admissible exponent interval.
pub const GAMMA_MIN: f64 = -5.0 / 6.0;
/// Upper end of the admissible exponent interval.
pub const GAMMA_MAX: f64 = 1.0 / 6.0;
/// The exponent of the mass-carrying profile; a root of the wall equation for every `r`.
pub const TRIVIAL_ROOT: f64 = -2.0 / 3.0;
/// Width of the rejected band around the critical coefficient.
pub const CRITICAL_BAND: f64 = 1e-9;

/// `9^{2/3}`, the scale factor that appears in every flux constant.
pub fn nine_two_thirds() -> f64 {
    9f64.powf(2.0 / 3.0)
}

/// Critical restitution coefficient `e^{-π/√3}`.
pub fn critical_r() -> f64 {
    (-PI / 3f64.sqrt()).exp()
}

fn check_r(r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(KfpError::Domain(format!(
            "restitution coefficient must be positive, got {r}"
        )));
    }
    if (r - critical_r()).abs() <= CRITICAL_BAND {
        return Err(KfpError::DegenerateRoot {
            r,
            band: CRITICAL_BAND,
        });
    }
    Ok(())
}

/// Left side of the wall compatibility equation for a candidate exponent.
pub fn wall_equation(r: f64, gamma: f64) -> f64 {
    (2.0 + 3.0 * gamma) * r.ln() + (2.0 * cos_pi(gamma + 1.0 / 3.0)).ln()
}

/// Residual of `r^{2+3γ} K_γ = 1`.
pub fn wall_residual(r: f64, gamma: f64) -> f64 {
    r.powf(2.0 + 3.0 * gamma) * 2.0 * cos_pi(gamma + 1.0 / 3.0) - 1.0
}

/// Maximizer of [`wall_equation`] in `gamma`.
fn wall_maximizer(r: f64) -> f64 {
    (3.0 * r.ln() / PI).atan() / PI - 1.0 / 3.0
}

/// Bisection for a sign change of `f` inside `(lo, hi)` where `f(lo) < 0 < f(hi)`
/// in the limiting sense; endpoints are never evaluated.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, lo_negative: bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let neg = f(mid) < 0.0;
        if neg == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nontrivial root of the forward wall equation in `(-5/6, 1/6)`.
pub fn alpha_of_r(r: f64) -> Result<f64> {
    check_r(r)?;
    let x_max = wall_maximizer(r);
    let f = |g: f64| wall_equation(r, g);
    // One root on each side of the maximizer; -2/3 is on one of them.
    let root = if x_max < TRIVIAL_ROOT {
        // -2/3 lies to the right, the nontrivial root to the left.
        bisect(f, GAMMA_MIN, x_max, true)
    } else {
        bisect(f, x_max, GAMMA_MAX, false)
    };
    Ok(root)
}

/// Nontrivial root of the adjoint wall equation `-3β ln r + ln(2 sin(π(1/6 - β))) = 0`.
///
/// Solved independently of [`alpha_of_r`]; the two satisfy `α + β + 2/3 = 0`.
pub fn beta_of_r(r: f64) -> Result<f64> {
    check_r(r)?;
    let f = |b: f64| adjoint_wall_equation(r, b);
    // Mirror image of the forward bracket under β = -α - 2/3.
    let x_max = -wall_maximizer(r) - 2.0 / 3.0;
    let root = if x_max > 0.0 {
        bisect(f, x_max, GAMMA_MAX, false)
    } else {
        bisect(f, GAMMA_MIN, x_max, true)
    };
    Ok(root)
}

/// Left side of the adjoint wall equation.
pub fn adjoint_wall_equation(r: f64, beta: f64) -> f64 {
    -3.0 * beta * r.ln() + (2.0 * crate::specfun::sin_pi(1.0 / 6.0 - beta)).ln()
}

/// Ratio of the `ζ → +∞` and `ζ → -∞` amplitudes of `Λ_γ`: `2cos(π(γ + 1/3))`.
pub fn k_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > GAMMA_MIN && gamma < GAMMA_MAX) {
        return Err(KfpError::Domain(format!(
            "exponent {gamma} outside ({GAMMA_MIN}, {GAMMA_MAX})"
        )));
    }
    Ok(2.0 * cos_pi(gamma + 1.0 / 3.0))
}

/// Mass absorption constant `-9^{2/3}(ln r + π/√3)`; positive iff `r < r_c`.
pub fn kappa(r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(KfpError::Domain(format!(
            "restitution coefficient must be positive, got {r}"
        )));
    }
    Ok(-nine_two_thirds() * (r.ln() + PI / 3f64.sqrt()))
}

fn check_subcritical(r: f64) -> Result<()> {
    if !(r > 0.0 && r < critical_r()) {
        return Err(KfpError::Domain(format!(
            "pairing constant needs 0 < r < r_c = {}, got {r}",
            critical_r()
        )));
    }
    Ok(())
}

/// Closed form of the pairing constant `C_*` between `G_α` and `F_β`.
pub fn c_star_closed(r: f64) -> Result<f64> {
    check_subcritical(r)?;
    let alpha = alpha_of_r(r)?;
    let beta = -alpha - 2.0 / 3.0;
    let s = PI / 3.0 * ((PI * alpha).sin() + 3f64.sqrt() * (PI * alpha).cos())
        - 2.0 * cos_pi(beta + 1.0 / 3.0) * r.ln();
    Ok(nine_two_thirds() * s)
}

/// Second algebraic form of `C_*`, written through `ζ = -(α + 2/3)` with `ln r`
/// eliminated by the wall equation.
pub fn c_star_closed_alt(r: f64) -> Result<f64> {
    check_subcritical(r)?;
    let alpha = alpha_of_r(r)?;
    let z = -(alpha + 2.0 / 3.0);
    let k = 2.0 * cos_pi(z + 1.0 / 3.0);
    let s = -4.0 * PI / 3.0 * (PI * z).sin() - k * (k.ln() / (3.0 * z) + 3f64.sqrt() * PI / 3.0);
    Ok(nine_two_thirds() * s)
}

/// All exponent constants for one restitution coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub kappa: f64,
    pub r_c: f64,
    /// Present only for `r < r_c`.
    pub c_star: Option<f64>,
}

impl ExponentTable {
    pub fn new(r: f64) -> Result<Self> {
        let alpha = alpha_of_r(r)?;
        let beta = beta_of_r(r)?;
        let r_c = critical_r();
        Ok(ExponentTable {
            r,
            alpha,
            beta,
            k_alpha: k_gamma(alpha)?,
            k_beta: k_gamma(beta)?,
            kappa: kappa(r)?,
            r_c,
            c_star: if r < r_c {
                Some(c_star_closed(r)?)
            } else {
                None
            },
        })
    }

    pub fn is_subcritical(&self) -> bool {
        self.r < self.r_c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value() {
        assert!((critical_r() - 0.16303).abs() < 5e-6);
        assert!(kappa(critical_r()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn elastic_and_half() {
        assert!(alpha_of_r(1.0).unwrap().abs() < 1e-12);
        assert!((beta_of_r(1.0).unwrap() + 2.0 / 3.0).abs() < 1e-12);
        // 2cos(0) = 2 = 0.5^{-1}
        assert!((alpha_of_r(0.5).unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn near_critical_and_small_r() {
        let rc = critical_r();
        for r in [rc * (1.0 - 1e-4 / rc), rc + 1e-4] {
            assert!((alpha_of_r(r).unwrap() + 2.0 / 3.0).abs() < 5e-3);
            assert!(beta_of_r(r).unwrap().abs() < 5e-3);
        }
        assert!(alpha_of_r(1e-6).unwrap() < -0.83);
        assert!(matches!(
            alpha_of_r(rc),
            Err(KfpError::DegenerateRoot { .. })
        ));
    }

    #[test]
    fn kappa_at_one() {
        let k = kappa(1.0).unwrap();
        assert!((k + 7.848).abs() < 5e-4, "{k}");
        assert!(kappa(0.05).unwrap() > 0.0);
    }

    #[test]
    fn k_gamma_values() {
        assert!((k_gamma(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((k_gamma(-2.0 / 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(k_gamma(GAMMA_MIN + 1e-9).unwrap() < 1e-8);
        assert!(k_gamma(0.2).is_err());
    }

    #[test]
    fn c_star_forms_agree() {
        for r in [0.01, 0.05, 0.1, 0.15] {
            let a = c_star_closed(r).unwrap();
            let b = c_star_closed_alt(r).unwrap();
            assert!(a < 0.0);
            assert!(((a - b) / a).abs() < 1e-10, "r = {r}: {a} vs {b}");
        }
        assert!(c_star_closed(0.2).is_err());
    }

    #[test]
    fn table_is_consistent() {
        let t = ExponentTable::new(0.05).unwrap();
        assert!((t.alpha + t.beta + 2.0 / 3.0).abs() < 1e-12);
        assert!((t.k_alpha - t.k_beta).abs() < 1e-10);
        assert!((t.k_alpha - 0.05f64.powf(3.0 * t.beta)).abs() < 1e-10);
        assert!(t.c_star.is_some());
        assert!(ExponentTable::new(0.5).unwrap().c_star.is_none());
    }
}
