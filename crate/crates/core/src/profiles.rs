//! Self-similar corner profiles.
//!
//! Forward: `G_γ(x, v) = x^γ Λ_γ(ζ)` with `ζ = v/(9x)^{1/3}` and
//! `Λ_γ(ζ) = U(-γ, 2/3, -ζ³)`.
//! Adjoint: `F_β(x, v) = x^β Φ_β(y)` with `y = v³/(9x)` and `Φ_β(y) = U(-β, 2/3, y)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{KfpError, Result, SpecFunError};
use crate::exponents::{self, GAMMA_MAX, GAMMA_MIN};
use crate::quad;
use crate::specfun::{self, rgamma, SpecFunResult};

const TWO_THIRDS: f64 = 2.0 / 3.0;
/// Relative error estimate above which a profile value is rejected.
const PROFILE_TOL: f64 = 1e-8;

/// A point of the half plane `x >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub v: f64,
}

impl PhasePoint {
    pub fn new(x: f64, v: f64) -> Self {
        PhasePoint { x, v }
    }

    /// The scale-invariant distance `x + |v|³` to the corner.
    pub fn norm(&self) -> f64 {
        self.x + self.v.abs().powi(3)
    }

    /// Similarity variable `v/(9x)^{1/3}`.
    pub fn zeta(&self) -> f64 {
        self.v / (9.0 * self.x).cbrt()
    }

    /// Rescales by `(λ³x, λv)`.
    pub fn scaled(&self, lambda: f64) -> Self {
        PhasePoint {
            x: lambda.powi(3) * self.x,
            v: lambda * self.v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Forward,
    Adjoint,
}

/// A self-similar solution of the steady forward or adjoint equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    gamma: f64,
    kind: ProfileKind,
}

impl Profile {
    pub fn new(gamma: f64, kind: ProfileKind) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Profile { gamma, kind })
    }

    pub fn forward(gamma: f64) -> Result<Self> {
        Self::new(gamma, ProfileKind::Forward)
    }

    pub fn adjoint(beta: f64) -> Result<Self> {
        Self::new(beta, ProfileKind::Adjoint)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    /// The one-variable shape: `Λ_γ(s)` for forward, `Φ_β(s)` for adjoint profiles.
    pub fn shape(&self, s: f64) -> Result<f64> {
        match self.kind {
            ProfileKind::Forward => lambda_profile(self.gamma, s),
            ProfileKind::Adjoint => phi_profile(self.gamma, s),
        }
    }

    /// Evaluates the two-variable profile at `p` (requires `x > 0`).
    pub fn eval(&self, p: PhasePoint) -> Result<f64> {
        match self.kind {
            ProfileKind::Forward => g_gamma(self.gamma, p),
            ProfileKind::Adjoint => f_profile(self.gamma, p),
        }
    }

    /// Residual of the steady equation at `p` from 5-point stencils of width `h`.
    pub fn steady_residual(&self, p: PhasePoint, h: f64) -> Result<f64> {
        let f = |x: f64, v: f64| self.eval(PhasePoint::new(x, v));
        let dx = five_point_first(|s| f(p.x + s, p.v), h)?;
        let dvv = five_point_second(|s| f(p.x, p.v + s), h)?;
        Ok(match self.kind {
            ProfileKind::Forward => p.v * dx - dvv,
            ProfileKind::Adjoint => p.v * dx + dvv,
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > GAMMA_MIN && gamma < GAMMA_MAX) {
        return Err(KfpError::Domain(format!(
            "profile exponent {gamma} outside ({GAMMA_MIN}, {GAMMA_MAX})"
        )));
    }
    Ok(())
}

fn accept(func: &'static str, r: SpecFunResult) -> Result<f64> {
    if !r.value.is_finite() || r.abs_err_est > PROFILE_TOL * r.value.abs() + 1e-300 {
        return Err(SpecFunError::AccuracyLoss { func, best: r }.into());
    }
    Ok(r.value)
}

/// `Λ_γ(ζ) = U(-γ, 2/3, -ζ³)`, positive for admissible `γ`.
///
/// For `ζ > 0` this is the real two-term Kummer combination; for `ζ <= 0` the
/// argument of `U` is positive and the cancellation-free branches of
/// [`specfun::tricomi_u`] are used.
pub fn lambda_profile(gamma: f64, zeta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !zeta.is_finite() {
        return Err(KfpError::Domain(format!("non-finite ζ = {zeta}")));
    }
    let z = -zeta.powi(3);
    let r = specfun::u_impl(-gamma, TWO_THIRDS, z)?;
    accept("lambda_profile", r)
}

/// `Λ_γ'(ζ)`.
pub fn lambda_derivative(gamma: f64, zeta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let a = -gamma;
    if a == 0.0 {
        return Ok(0.0);
    }
    if zeta < -1.0 {
        // d/dζ U(a, 2/3, -ζ³) = 3aζ² U(a+1, 5/3, -ζ³)
        let z = -zeta.powi(3);
        let u = specfun::u_impl(a + 1.0, 5.0 / 3.0, z)?;
        let c = 3.0 * a * zeta * zeta;
        return accept("lambda_derivative", u).map(|u| c * u);
    }
    // Differentiate the real two-term form directly; it is smooth through ζ = 0.
    let w = -zeta.powi(3);
    let c = PI / specfun::sin_pi(TWO_THIRDS);
    let c1 = c * rgamma(a + 1.0 / 3.0) * rgamma(TWO_THIRDS);
    let c2 = c * rgamma(a) * rgamma(4.0 / 3.0);
    let m_a1 = specfun::m_impl(a + 1.0, 5.0 / 3.0, w)?;
    let m_b = specfun::m_impl(a + 1.0 / 3.0, 4.0 / 3.0, w)?;
    let m_b1 = specfun::m_impl(a + 4.0 / 3.0, 7.0 / 3.0, w)?;
    let z2 = zeta * zeta;
    let t1 = -c1 * 3.0 * z2 * (a / TWO_THIRDS) * m_a1.value;
    let t2 = c2 * m_b.value;
    let t3 = -c2 * 3.0 * z2 * zeta * ((a + 1.0 / 3.0) / (4.0 / 3.0)) * m_b1.value;
    let err = (c1 * 3.0 * z2 * (a / TWO_THIRDS)).abs() * m_a1.abs_err_est
        + c2.abs() * m_b.abs_err_est
        + (c2 * 3.0 * z2 * zeta * ((a + 1.0 / 3.0) / (4.0 / 3.0))).abs() * m_b1.abs_err_est
        + 8.0 * f64::EPSILON * (t1.abs() + t2.abs() + t3.abs());
    accept(
        "lambda_derivative",
        SpecFunResult {
            value: t1 + t2 + t3,
            abs_err_est: err,
        },
    )
}

/// `Λ_{-2/3}` from its integral form `3∫_{-∞}^ζ exp(s³ - ζ³) ds`.
pub fn lambda_m23_closed(zeta: f64) -> Result<f64> {
    if !(zeta.abs() <= 50.0) {
        return Err(KfpError::Domain(format!("|ζ| = {} exceeds 50", zeta.abs())));
    }
    // s = ζ - u: exponent -3ζ²u + 3ζu² - u³ <= -u·max(0.75ζ², ...)
    let cube = 50f64.cbrt();
    let upper = if zeta >= 0.0 {
        let lin = if zeta > 0.0 {
            50.0 / (0.75 * zeta * zeta)
        } else {
            f64::INFINITY
        };
        (cube + 3.0 * zeta).min(lin)
    } else {
        cube.min(50.0 / (3.0 * zeta * zeta))
    };
    let f = |u: f64| (-u * (3.0 * zeta * zeta - 3.0 * zeta * u + u * u)).exp();
    let r = quad::adaptive(f, 0.0, upper, 1e-15, 1e-13)?;
    Ok(3.0 * r.value)
}

/// `G_γ(x, v) = x^γ Λ_γ(v/(9x)^{1/3})` for `x > 0`.
pub fn g_gamma(gamma: f64, p: PhasePoint) -> Result<f64> {
    if !(p.x > 0.0) {
        return Err(KfpError::Domain(format!(
            "G_γ needs x > 0 (got {}); use boundary_trace at the wall",
            p.x
        )));
    }
    Ok(p.x.powf(gamma) * lambda_profile(gamma, p.zeta())?)
}

/// `∂_v G_γ(x, v)`.
pub fn g_gamma_dv(gamma: f64, p: PhasePoint) -> Result<f64> {
    if !(p.x > 0.0) {
        return Err(KfpError::Domain(format!(
            "∂_v G_γ needs x > 0 (got {})",
            p.x
        )));
    }
    let s = (9.0 * p.x).cbrt();
    Ok(p.x.powf(gamma) * lambda_derivative(gamma, p.v / s)? / s)
}

/// Wall trace `G_γ(0+, v)`: `|v|^{3γ}/9^γ` for `v < 0`, `K_γ|v|^{3γ}/9^γ` for `v > 0`.
pub fn boundary_trace(gamma: f64, v: f64) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        return Err(KfpError::Domain(
            "the wall trace is singular at v = 0".into(),
        ));
    }
    let base = v.abs().powf(3.0 * gamma) / 9f64.powf(gamma);
    if v < 0.0 {
        Ok(base)
    } else {
        Ok(exponents::k_gamma(gamma)? * base)
    }
}

/// Residual `G(0, v) - r² G(0, -rv)` of the wall law at an outgoing velocity `v < 0`.
pub fn steady_bc_residual(gamma: f64, r: f64, v: f64) -> Result<f64> {
    if !(v < 0.0) {
        return Err(KfpError::Domain(
            "wall law is checked at outgoing velocities v < 0".into(),
        ));
    }
    let lhs = boundary_trace(gamma, v)?;
    Ok(lhs - r * r * boundary_trace(gamma, -r * v)?)
}

/// `Φ_β(y) = U(-β, 2/3, y)`.
pub fn phi_profile(beta: f64, y: f64) -> Result<f64> {
    check_gamma(beta)?;
    let r = specfun::u_impl(-beta, TWO_THIRDS, y)?;
    accept("phi_profile", r)
}

/// `F_β(x, v) = x^β Φ_β(v³/(9x))` for a given adjoint exponent.
pub fn f_profile(beta: f64, p: PhasePoint) -> Result<f64> {
    if !(p.x > 0.0) {
        return Err(KfpError::Domain(format!("F_β needs x > 0 (got {})", p.x)));
    }
    Ok(p.x.powf(beta) * phi_profile(beta, p.v.powi(3) / (9.0 * p.x))?)
}

/// The adjoint profile with `β = β(r)`, for `0 < r < r_c`.
pub fn f_beta(r: f64, p: PhasePoint) -> Result<f64> {
    if !(r > 0.0 && r < exponents::critical_r()) {
        return Err(KfpError::Domain(format!(
            "adjoint profile needs 0 < r < r_c, got {r}"
        )));
    }
    f_profile(exponents::beta_of_r(r)?, p)
}

/// Wall trace `F_β(0+, v)`: `v^{3β}/9^β` for `v > 0`, `K_β|v|^{3β}/9^β` for `v < 0`.
pub fn adjoint_trace(beta: f64, v: f64) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        return Err(KfpError::Domain(
            "the wall trace is singular at v = 0".into(),
        ));
    }
    let base = v.abs().powf(3.0 * beta) / 9f64.powf(beta);
    if v > 0.0 {
        Ok(base)
    } else {
        Ok(exponents::k_gamma(beta)? * base)
    }
}

pub(crate) fn five_point_first<F: Fn(f64) -> Result<f64>>(f: F, h: f64) -> Result<f64> {
    Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
}

pub(crate) fn five_point_second<F: Fn(f64) -> Result<f64>>(f: F, h: f64) -> Result<f64> {
    Ok(
        (-f(2.0 * h)? + 16.0 * f(h)? - 30.0 * f(0.0)? + 16.0 * f(-h)? - f(-2.0 * h)?)
            / (12.0 * h * h),
    )
}

/// Finite-difference residual of `Λ'' + 3ζ²Λ' - 9γζΛ = 0`, with stencil width
/// `1e-3·max(1, |ζ|)`. Returns `(residual, Λ(ζ))`.
pub fn lambda_ode_residual(gamma: f64, zeta: f64) -> Result<(f64, f64)> {
    let h = 1e-3 * zeta.abs().max(1.0);
    let f = |s: f64| lambda_profile(gamma, zeta + s);
    let d1 = five_point_first(f, h)?;
    let d2 = five_point_second(f, h)?;
    let l = lambda_profile(gamma, zeta)?;
    Ok((d2 + 3.0 * zeta * zeta * d1 - 9.0 * gamma * zeta * l, l))
}

/// Finite-difference residual of Kummer's equation `zΦ'' + (2/3 - z)Φ' + γΦ = 0`
/// for `Φ(z) = U(-γ, 2/3, z)`. Returns `(residual, scale)` where `scale` is the
/// sum of the magnitudes of the three terms.
pub fn kummer_residual(gamma: f64, z: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    if z == 0.0 {
        return Err(KfpError::Domain(
            "Kummer residual is singular at z = 0".into(),
        ));
    }
    let h = (1e-3 * z.abs().max(1.0)).min(0.2 * z.abs());
    let f = |s: f64| -> Result<f64> {
        let r = specfun::u_impl(-gamma, TWO_THIRDS, z + s)?;
        Ok(r.value)
    };
    let d1 = five_point_first(f, h)?;
    let d2 = five_point_second(f, h)?;
    let phi = f(0.0)?;
    let terms = [z * d2, (TWO_THIRDS - z) * d1, gamma * phi];
    Ok((terms.iter().sum(), terms.iter().map(|t| t.abs()).sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gamma_fn;

    #[test]
    fn lambda_at_zero_is_gamma_third() {
        let g3 = gamma_fn(1.0 / 3.0).unwrap();
        assert!((lambda_profile(-TWO_THIRDS, 0.0).unwrap() - g3).abs() < 1e-12);
        assert!((lambda_m23_closed(0.0).unwrap() - g3).abs() < 1e-10);
    }

    #[test]
    fn lambda_asymptotes() {
        let g = -0.75;
        let k = exponents::k_gamma(g).unwrap();
        let left = lambda_profile(g, -30.0).unwrap() / 30f64.powf(3.0 * g);
        let right = lambda_profile(g, 30.0).unwrap() / 30f64.powf(3.0 * g);
        assert!((left - 1.0).abs() < 0.01, "{left}");
        assert!((right / k - 1.0).abs() < 0.01, "{right} vs {k}");
    }

    #[test]
    fn closed_form_derivative_and_tail() {
        let h = 1e-5;
        let d = (lambda_m23_closed(h).unwrap() - lambda_m23_closed(-h).unwrap()) / (2.0 * h);
        assert!((d - 3.0).abs() < 1e-6, "{d}");
        let v = lambda_m23_closed(-20.0).unwrap();
        assert!((v / 0.0025 - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn closed_form_ode() {
        // Λ' + 3ζ²Λ = 3
        for &z in &[-3.0f64, -0.5, 0.7, 2.5] {
            let h = 1e-4;
            let d =
                (lambda_m23_closed(z + h).unwrap() - lambda_m23_closed(z - h).unwrap()) / (2.0 * h);
            let l = lambda_m23_closed(z).unwrap();
            assert!((d + 3.0 * z * z * l - 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &g in &[-0.8, -2.0 / 3.0, -0.3, 0.1] {
            for &z in &[-4.0f64, -1.5, -1.0, -0.4, 0.0, 0.6, 3.0, 12.0] {
                let h = 1e-4 * f64::max(1.0, z.abs());
                let fd = five_point_first(|s| lambda_profile(g, z + s), h).unwrap();
                let d = lambda_derivative(g, z).unwrap();
                assert!(
                    (fd - d).abs() < 1e-7 * (1.0 + d.abs()),
                    "γ={g} ζ={z}: {fd} vs {d}"
                );
            }
        }
        // Closed form: Λ'(0) = 3 for γ = -2/3
        assert!((lambda_derivative(-TWO_THIRDS, 0.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_asymptote() {
        let g = -0.75;
        let k = exponents::k_gamma(g).unwrap();
        let d = lambda_derivative(g, 30.0).unwrap();
        let lead = 3.0 * g * k * 30f64.powf(3.0 * g - 1.0);
        assert!((d / lead - 1.0).abs() < 0.03, "{d} vs {lead}");
    }

    #[test]
    fn g_homogeneity_and_trace() {
        let g = exponents::alpha_of_r(0.1).unwrap();
        let p = PhasePoint::new(0.1, 0.5);
        let ratio = g_gamma(g, p.scaled(2.0)).unwrap() / g_gamma(g, p).unwrap();
        assert!((ratio - 2f64.powf(3.0 * g)).abs() < 1e-10);
        let near = g_gamma(g, PhasePoint::new(1e-8, -1.0)).unwrap();
        let trace = boundary_trace(g, -1.0).unwrap();
        assert!((near / trace - 1.0).abs() < 1e-4);
        assert!(g_gamma(g, PhasePoint::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn steady_residuals() {
        let g = exponents::alpha_of_r(0.1).unwrap();
        let p = PhasePoint::new(0.3, -0.7);
        let prof = Profile::forward(g).unwrap();
        let res = prof.steady_residual(p, 1e-4).unwrap();
        let val = prof.eval(p).unwrap();
        assert!(res.abs() < 1e-5 * val.abs() / p.x, "{res}");

        let beta = exponents::beta_of_r(0.1).unwrap();
        let adj = Profile::adjoint(beta).unwrap();
        let q = PhasePoint::new(0.3, 0.7);
        let res = adj.steady_residual(q, 1e-4).unwrap();
        assert!(res.abs() < 1e-5 * adj.eval(q).unwrap().abs() / q.x, "{res}");
    }

    #[test]
    fn wall_law_on_traces() {
        assert!(steady_bc_residual(-TWO_THIRDS, 0.3, -1.0).unwrap().abs() < 1e-12);
        let g = exponents::alpha_of_r(0.1).unwrap();
        assert!(steady_bc_residual(g, 0.1, -2.0).unwrap().abs() < 1e-9);
        assert!((boundary_trace(0.0, 1.3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(boundary_trace(0.0, -1.3).unwrap(), 1.0);
        assert!(boundary_trace(0.0, 0.0).is_err());
    }

    #[test]
    fn adjoint_trace_ratio() {
        let r = 0.1;
        let beta = exponents::beta_of_r(r).unwrap();
        let ratio = adjoint_trace(beta, r).unwrap() / adjoint_trace(beta, -1.0).unwrap();
        assert!((ratio - 1.0).abs() < 1e-8);
        assert_eq!(f_profile(0.0, PhasePoint::new(0.4, -2.0)).unwrap(), 1.0);
        assert!(f_beta(0.5, PhasePoint::new(1.0, 1.0)).is_err());
    }
}
