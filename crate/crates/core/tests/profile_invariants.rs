use kfp_core::exponents::{self, GAMMA_MAX, GAMMA_MIN};
use kfp_core::profiles::{
    g_gamma, kummer_residual, lambda_m23_closed, lambda_ode_residual, lambda_profile, PhasePoint,
};
use kfp_core::quad::GaussLegendre;
use proptest::prelude::*;

fn gamma_grid() -> Vec<f64> {
    (1..12)
        .map(|i| GAMMA_MIN + (GAMMA_MAX - GAMMA_MIN) * i as f64 / 12.0)
        .chain([-2.0 / 3.0, exponents::alpha_of_r(0.1).unwrap()])
        .collect()
}

#[test]
fn lambda_positive_on_grid() {
    for g in gamma_grid() {
        for i in 0..=120 {
            let z = -30.0 + 0.5 * i as f64;
            let l = lambda_profile(g, z).unwrap();
            assert!(l > 0.0, "γ={g} ζ={z}: {l}");
        }
    }
}

#[test]
fn integral_form_agrees_with_hypergeometric_form() {
    let mut worst = 0.0_f64;
    for i in 0..=200 {
        let z = -10.0 + 0.1 * i as f64;
        let a = lambda_profile(-2.0 / 3.0, z).unwrap();
        let b = lambda_m23_closed(z).unwrap();
        worst = worst.max(((a - b) / b).abs());
    }
    assert!(worst < 1e-6, "max relative gap {worst:e}");
}

#[test]
fn ode_residual_small() {
    for g in gamma_grid() {
        for i in 0..=100 {
            let z = -5.0 + 0.1 * i as f64;
            let (res, l) = lambda_ode_residual(g, z).unwrap();
            assert!(
                res.abs() < 1e-5 * (1.0 + l.abs()),
                "γ={g} ζ={z}: residual {res:e}"
            );
        }
    }
}

#[test]
fn kummer_equation_residual_small() {
    for g in gamma_grid() {
        for i in 0..=200 {
            let z = -50.0 + 0.5 * i as f64 + 0.123;
            let (res, scale) = kummer_residual(g, z).unwrap();
            assert!(
                res.abs() < 1e-6 * scale.max(1e-12),
                "γ={g} z={z}: {res:e} vs {scale:e}"
            );
        }
    }
}

/// `∫∫_{0<x<1, |v|<1} G_γ` by dyadic Gauss-Legendre panels in both variables.
fn origin_integral(gamma: f64, panels: usize, nodes: usize) -> f64 {
    let rule = GaussLegendre::new(nodes);
    let dyadic = |k: usize| -> (f64, f64) {
        let hi = 0.5f64.powi(k as i32);
        (0.5 * hi, hi)
    };
    let mut total = 0.0;
    for kx in 0..panels {
        let (xa, xb) = dyadic(kx);
        for (x, wx) in rule.mapped(xa, xb) {
            for kv in 0..panels {
                let (va, vb) = dyadic(kv);
                for (v, wv) in rule.mapped(va, vb) {
                    let g = g_gamma(gamma, PhasePoint::new(x, v)).unwrap()
                        + g_gamma(gamma, PhasePoint::new(x, -v)).unwrap();
                    total += wx * wv * g;
                }
            }
        }
    }
    total
}

#[test]
fn profiles_integrable_near_origin() {
    for g in [-2.0 / 3.0, exponents::alpha_of_r(0.1).unwrap(), -0.3] {
        let coarse = origin_integral(g, 24, 6);
        let fine = origin_integral(g, 36, 10);
        assert!(fine.is_finite() && fine > 0.0);
        assert!(
            ((coarse - fine) / fine).abs() < 1e-2,
            "γ={g}: {coarse} vs {fine}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity(x in 1e-3f64..10.0, v in -3.0f64..3.0, lambda in 0.2f64..5.0, r in 0.02f64..0.9) {
        prop_assume!((r - exponents::critical_r()).abs() > 1e-3);
        let g = exponents::alpha_of_r(r).unwrap();
        let p = PhasePoint::new(x, v);
        let lhs = g_gamma(g, p.scaled(lambda)).unwrap();
        let rhs = lambda.powf(3.0 * g) * g_gamma(g, p).unwrap();
        prop_assert!(((lhs - rhs) / rhs).abs() < 1e-10);
    }

    #[test]
    fn wall_residual_of_alpha(r in 1e-4f64..100.0) {
        prop_assume!((r - exponents::critical_r()).abs() > 1e-6);
        let a = exponents::alpha_of_r(r).unwrap();
        prop_assert!(exponents::wall_residual(r, a).abs() < 1e-10);
        prop_assert!(exponents::wall_residual(r, -2.0 / 3.0).abs() < 1e-10);
    }
}
