//! Browser bindings for a few cheap operations of `kfp-core`.

use kfp_core::exponents::ExponentTable;
use kfp_core::particle_mc::{bounce_chain, ParticleState};
use kfp_core::profiles;
use kfp_core::KfpError;
use wasm_bindgen::prelude::*;

/// `[alpha, beta, kappa, r_c, c_star]`; `c_star` is NaN above `r_c`.
pub fn exponent_row(r: f64) -> Result<Vec<f64>, KfpError> {
    let t = ExponentTable::new(r)?;
    Ok(vec![
        t.alpha,
        t.beta,
        t.kappa,
        t.r_c,
        t.c_star.unwrap_or(f64::NAN),
    ])
}

/// `Λ_γ` at `samples` evenly spaced points of `[from, to]`.
pub fn profile_samples(
    gamma: f64,
    from: f64,
    to: f64,
    samples: usize,
) -> Result<Vec<f64>, KfpError> {
    let n = samples.max(2);
    (0..n)
        .map(|k| profiles::lambda_profile(gamma, from + (to - from) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Wall speeds of one bounce chain from `(0, 1)`, followed by a termination
/// code: 0 cutoff, 1 collapse, 2 time limit.
pub fn chain_speeds(r: f64, max_bounces: usize, seed: u64) -> Result<Vec<f64>, KfpError> {
    let rec = bounce_chain(
        r,
        ParticleState::new(0.0, 1.0, 0.0),
        max_bounces,
        1e-6,
        f64::INFINITY,
        seed,
    )?;
    let code = match rec.terminated {
        kfp_core::particle_mc::Termination::Cutoff => 0.0,
        kfp_core::particle_mc::Termination::Collapse => 1.0,
        kfp_core::particle_mc::Termination::TimeLimit => 2.0,
    };
    let mut out = rec.hit_speeds;
    out.push(code);
    Ok(out)
}

fn js(e: KfpError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn exponents(r: f64) -> Result<Vec<f64>, JsError> {
    exponent_row(r).map_err(js)
}

#[wasm_bindgen]
pub fn profile(gamma: f64, from: f64, to: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    profile_samples(gamma, from, to, samples).map_err(js)
}

#[wasm_bindgen]
pub fn chain(r: f64, max_bounces: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    chain_speeds(r, max_bounces, seed.into()).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elastic_row() {
        let row = exponent_row(1.0).unwrap();
        assert!(row[0].abs() < 1e-12);
        assert!(row[4].is_nan());
    }

    #[test]
    fn profile_endpoints() {
        let v = profile_samples(-2.0 / 3.0, -1.0, 1.0, 3).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn chain_has_code() {
        let v = chain_speeds(0.5, 5, 1).unwrap();
        assert_eq!(*v.last().unwrap(), 0.0);
        assert_eq!(v.len(), 6);
    }
}
