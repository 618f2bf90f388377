//! Boundary fluxes of the corner profiles through the rectangles
//! `{0 <= x <= bδ³, -δ <= v <= rδ}`, the `ζΛ` moment and the pairing constant `C_*`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{KfpError, Result};
use crate::exponents::{self, nine_two_thirds};
use crate::profiles::{g_gamma, g_gamma_dv, lambda_profile, PhasePoint};
use crate::quad::{self, GaussLegendre};
use crate::specfun::cos_pi;

/// Nodes per edge used by [`boundary_flux`].
pub const EDGE_NODES: usize = 2000;
/// Default truncation radius for [`c_star_quadrature`].
pub const DEFAULT_R_MAX: f64 = 200.0;

/// The rectangle `{0 <= x <= bδ³, -δ <= v <= rδ}` adjacent to the corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxBox {
    pub delta: f64,
    pub b: f64,
    pub r: f64,
}

impl FluxBox {
    pub fn new(delta: f64, b: f64, r: f64) -> Result<Self> {
        for (name, value) in [("delta", delta), ("b", b), ("r", r)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(KfpError::config(
                    name,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        Ok(FluxBox { delta, b, r })
    }

    pub fn x_extent(&self) -> f64 {
        self.b * self.delta.powi(3)
    }
}

/// Mass flux of `G_{-2/3}`, the pairing constant and the absorption constant for one `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxConstants {
    pub mass_flux: f64,
    pub c_star: Option<f64>,
    pub kappa: f64,
}

impl FluxConstants {
    pub fn closed_form(r: f64) -> Result<Self> {
        let kappa = exponents::kappa(r)?;
        let c_star = if r < exponents::critical_r() {
            Some(exponents::c_star_closed(r)?)
        } else {
            None
        };
        Ok(FluxConstants {
            mass_flux: -kappa,
            c_star,
            kappa,
        })
    }
}

/// Closed form of the `G_{-2/3}` flux: `9^{2/3}(ln r + π/√3)`.
pub fn mass_flux_closed(r: f64) -> Result<f64> {
    Ok(-exponents::kappa(r)?)
}

/// `∫_{-M}^{M} ζ Λ_{-2/3}(ζ) dζ`, which tends to `π/√3`.
pub fn zeta_lambda_moment(m: f64) -> Result<f64> {
    if !(0.0..=1e3).contains(&m) {
        return Err(KfpError::Domain(format!(
            "moment cutoff must lie in [0, 1000], got {m}"
        )));
    }
    if m == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| z * lambda_profile(-2.0 / 3.0, z).unwrap_or(f64::NAN);
    // Unit panels near the origin, then geometric panels in the tails.
    let mut edges = vec![0.0];
    let mut e = 0.0_f64;
    while e < m {
        e = if e < 4.0 { e + 1.0 } else { e * 1.5 };
        edges.push(e.min(m));
    }
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += quad::adaptive(f, w[0], w[1], 1e-13, 1e-12)?.value;
        total += quad::adaptive(f, -w[1], -w[0], 1e-13, 1e-12)?.value;
    }
    Ok(total)
}

/// The three contributions to the flux, each with its sign in the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxParts {
    /// `-∫ ∂_v G(x, rδ) dx`
    pub top: f64,
    /// `∫ ∂_v G(x, -δ) dx`
    pub bottom: f64,
    /// `∫ v G(bδ³, v) dv`
    pub left: f64,
}

impl FluxParts {
    pub fn total(&self) -> f64 {
        self.top + self.bottom + self.left
    }

    /// Sum of magnitudes, the natural scale against which cancellation is judged.
    pub fn scale(&self) -> f64 {
        self.top.abs() + self.bottom.abs() + self.left.abs()
    }
}

const DYADIC_LEVELS: usize = 40;

/// `∫_0^X f(x) dx` with `f` bounded at 0: dyadic panels toward the corner.
fn dyadic_integral<F>(f: F, x_max: f64, rule: &GaussLegendre) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let panels: Vec<Result<f64>> = (0..DYADIC_LEVELS)
        .into_par_iter()
        .map(|k| {
            let hi = x_max * 0.5f64.powi(k as i32);
            rule.try_integrate(&f, 0.5 * hi, hi)
        })
        .collect();
    let mut total = 0.0;
    for p in panels {
        total += p?;
    }
    // Remainder [0, X 2^{-K}] from the bounded integrand.
    let x_min = x_max * 0.5f64.powi(DYADIC_LEVELS as i32);
    Ok(total + x_min * f(0.5 * x_min)?)
}

fn left_edge<F>(f: F, lo: f64, hi: f64, rule: &GaussLegendre, pieces: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let parts: Vec<Result<f64>> = (0..pieces)
        .into_par_iter()
        .map(|i| {
            let a = lo + (hi - lo) * i as f64 / pieces as f64;
            let b = lo + (hi - lo) * (i + 1) as f64 / pieces as f64;
            rule.try_integrate(&f, a, b)
        })
        .collect();
    parts.into_iter().sum()
}

/// Flux of `G_γ` through the three edges of the box with `x > 0`, normal
/// pointing into the box, split by edge.
pub fn boundary_flux_parts(gamma: f64, fbox: &FluxBox) -> Result<FluxParts> {
    let x_max = fbox.x_extent();
    let (v_top, v_bottom) = (fbox.r * fbox.delta, -fbox.delta);
    // 40 dyadic panels of 50 nodes on each horizontal edge.
    let h_rule = GaussLegendre::new(EDGE_NODES / DYADIC_LEVELS);
    let top = -dyadic_integral(
        |x| g_gamma_dv(gamma, PhasePoint::new(x, v_top)),
        x_max,
        &h_rule,
    )?;
    let bottom = dyadic_integral(
        |x| g_gamma_dv(gamma, PhasePoint::new(x, v_bottom)),
        x_max,
        &h_rule,
    )?;

    let integrand = |v: f64| Ok(v * g_gamma(gamma, PhasePoint::new(x_max, v))?);
    let v_rule = GaussLegendre::new(EDGE_NODES / 20);
    let coarse_rule = GaussLegendre::new(EDGE_NODES / 40);
    let fine = left_edge(integrand, v_bottom, 0.0, &v_rule, 10)?
        + left_edge(integrand, 0.0, v_top, &v_rule, 10)?;
    let coarse = left_edge(integrand, v_bottom, 0.0, &coarse_rule, 10)?
        + left_edge(integrand, 0.0, v_top, &coarse_rule, 10)?;
    let parts = FluxParts {
        top,
        bottom,
        left: fine,
    };
    if (fine - coarse).abs() > 1e-9 * parts.scale().max(1e-300) {
        return Err(KfpError::Quadrature(format!(
            "left edge did not settle under refinement: {fine} vs {coarse}"
        )));
    }
    Ok(parts)
}

/// Total boundary flux of `G_γ` for the box.
pub fn boundary_flux(gamma: f64, fbox: &FluxBox) -> Result<f64> {
    Ok(boundary_flux_parts(gamma, fbox)?.total())
}

/// Fluxes over the nine boxes `δ ∈ {0.5, 1, 2}`, `b ∈ {0.25, 1, 4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxIndependenceReport {
    pub gamma: f64,
    pub r: f64,
    /// `(δ, b, flux, scale)` per box; `scale` is the sum of edge magnitudes.
    pub boxes: Vec<(f64, f64, f64, f64)>,
    pub max_deviation: f64,
    /// Largest `|flux|/scale` over the boxes.
    pub max_normalized: f64,
}

impl BoxIndependenceReport {
    pub fn mean(&self) -> f64 {
        self.boxes.iter().map(|b| b.2).sum::<f64>() / self.boxes.len() as f64
    }

    /// Maximum pairwise deviation relative to the mean flux.
    pub fn relative_deviation(&self) -> f64 {
        self.max_deviation / self.mean().abs().max(1e-300)
    }
}

pub fn box_independence_check(gamma: f64, r: f64) -> Result<BoxIndependenceReport> {
    let mut boxes = Vec::with_capacity(9);
    for delta in [0.5, 1.0, 2.0] {
        for b in [0.25, 1.0, 4.0] {
            let parts = boundary_flux_parts(gamma, &FluxBox::new(delta, b, r)?)?;
            boxes.push((delta, b, parts.total(), parts.scale()));
        }
    }
    let mut max_deviation = 0.0_f64;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            max_deviation = max_deviation.max((boxes[i].2 - boxes[j].2).abs());
        }
    }
    let max_normalized = boxes.iter().map(|b| b.2.abs() / b.3).fold(0.0, f64::max);
    Ok(BoxIndependenceReport {
        gamma,
        r,
        boxes,
        max_deviation,
        max_normalized,
    })
}

/// `w [Λ_α(w) Λ_β(-w) - Λ_α(-w) Λ_β(w)]`.
pub fn pairing_integrand(alpha: f64, beta: f64, w: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    let d = lambda_profile(alpha, w)? * lambda_profile(beta, -w)?
        - lambda_profile(alpha, -w)? * lambda_profile(beta, w)?;
    Ok(w * d)
}

/// `C_*` from the real-line pairing integral, averaged over `[R/2, R]`.
pub fn c_star_quadrature(r: f64, r_max: f64) -> Result<f64> {
    if !(r > 0.0 && r < exponents::critical_r()) {
        return Err(KfpError::Domain(format!("C_* needs 0 < r < r_c, got {r}")));
    }
    if !(50.0..=500.0).contains(&r_max) {
        return Err(KfpError::Domain(format!(
            "R_max must lie in [50, 500], got {r_max}"
        )));
    }
    let alpha = exponents::alpha_of_r(r)?;
    let beta = exponents::beta_of_r(r)?;
    let panels = r_max.ceil() as usize;
    let width = r_max / panels as f64;
    let rule = GaussLegendre::new(24);
    let pieces: Vec<Result<f64>> = (0..panels)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 * width;
            rule.try_integrate(|w| pairing_integrand(alpha, beta, w), a, a + width)
        })
        .collect();
    // Partial integrals at the panel ends.
    let mut partial = Vec::with_capacity(panels + 1);
    partial.push(0.0);
    for p in pieces {
        let last = *partial.last().expect("non-empty");
        partial.push(last + p?);
    }
    let half = panels / 2;
    let tail = &partial[half..];
    // Trapezoid average of the partial integrals over [R/2, R].
    let n = tail.len() - 1;
    let avg = (tail[1..n].iter().sum::<f64>() + 0.5 * (tail[0] + tail[n])) / n as f64;
    let spread = (partial[panels] - partial[half]).abs();
    if spread > 1e-4 * avg.abs().max(1.0) {
        return Err(KfpError::Convergence(format!(
            "pairing integral tail did not cancel: I(R) - I(R/2) = {spread:e}"
        )));
    }
    Ok(nine_two_thirds() * (-avg - 2.0 * cos_pi(beta + 1.0 / 3.0) * r.ln()))
}

/// Sign law of the `G_{-2/3}` flux: `π/√3` is the moment limit, `ln r_c = -π/√3`.
pub fn moment_limit() -> f64 {
    PI / 3f64.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_basics() {
        assert_eq!(zeta_lambda_moment(0.0).unwrap(), 0.0);
        let v100 = zeta_lambda_moment(100.0).unwrap();
        assert!((v100 - moment_limit()).abs() < 1e-2, "{v100}");
        let v50 = zeta_lambda_moment(50.0).unwrap();
        let v200 = zeta_lambda_moment(200.0).unwrap();
        assert!((v200 - v100).abs() < (v100 - v50).abs());
    }

    #[test]
    fn mass_flux_matches_closed_form() {
        let fbox = FluxBox::new(1.0, 1.0, 0.1).unwrap();
        let q = boundary_flux(-2.0 / 3.0, &fbox).unwrap();
        let expect = mass_flux_closed(0.1).unwrap();
        assert!((expect + 2.115).abs() < 1e-3);
        assert!(((q - expect) / expect).abs() < 1e-3, "{q} vs {expect}");
    }

    #[test]
    fn critical_flux_vanishes() {
        let fbox = FluxBox::new(1.0, 1.0, exponents::critical_r()).unwrap();
        assert!(boundary_flux(-2.0 / 3.0, &fbox).unwrap().abs() < 1e-3);
    }

    #[test]
    fn alpha_flux_vanishes() {
        let r = 0.1;
        let alpha = exponents::alpha_of_r(r).unwrap();
        let parts = boundary_flux_parts(alpha, &FluxBox::new(1.0, 1.0, r).unwrap()).unwrap();
        assert!(parts.total().abs() < 1e-6 * parts.scale(), "{parts:?}");
    }

    #[test]
    fn pairing_integrand_vanishes_at_zero() {
        assert_eq!(pairing_integrand(-0.7, -0.01, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn c_star_agrees_with_closed_form() {
        let q = c_star_quadrature(0.1, DEFAULT_R_MAX).unwrap();
        let c = exponents::c_star_closed(0.1).unwrap();
        assert!(((q - c) / c).abs() < 1e-3, "{q} vs {c}");
    }
}
