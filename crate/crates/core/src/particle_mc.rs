//! Monte Carlo for a Brownian particle `dX = V dt`, `dV = √2 dW` on `x > 0`
//! whose velocity is multiplied by `-r` at each wall hit.
//!
//! Free flight is sampled from its exact Gaussian transition law. Steps are
//! sized by the local scale-invariant time of the point, and a step that ends
//! behind the wall is refined by sampling the exact Gaussian bridge at its
//! midpoint until the crossing is resolved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KfpError, Result};
use crate::exponents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: f64,
    pub v: f64,
    pub t: f64,
}

impl ParticleState {
    pub fn new(x: f64, v: f64, t: f64) -> Self {
        ParticleState { x, v, t }
    }
}

/// Source of standard normal draws.
pub trait NoiseSource {
    fn normal(&mut self) -> f64;
}

/// Deterministic hook: every draw is zero, so paths are ballistic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn normal(&mut self) -> f64 {
        0.0
    }
}

/// Gaussian noise from a ChaCha stream.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    /// Stream `path` of the generator seeded with `seed`; streams are
    /// independent, so per-path results do not depend on scheduling.
    pub fn for_path(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        GaussianNoise { rng }
    }
}

impl NoiseSource for GaussianNoise {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Samples the free-flight transition over `dt` from the noise pair.
///
/// `ΔV = √(2dt) ξ₁` and `ΔX - V dt = (dt/2) ΔV + √(dt³/6) ξ₂`, which gives
/// `Var ΔV = 2dt`, `Var(ΔX - V dt) = 2dt³/3` and covariance `dt²`.
pub fn exact_increment(state: ParticleState, dt: f64, noise: (f64, f64)) -> ParticleState {
    let dv = (2.0 * dt).sqrt() * noise.0;
    let dx = state.v * dt + 0.5 * dt * dv + (dt * dt * dt / 6.0).sqrt() * noise.1;
    ParticleState {
        x: state.x + dx,
        v: state.v + dv,
        t: state.t + dt,
    }
}

/// Exact conditional law of the midpoint of a free-flight segment given both ends.
fn bridge_midpoint(a: ParticleState, b: ParticleState, noise: (f64, f64)) -> ParticleState {
    let len = b.t - a.t;
    let x = 0.5 * (a.x + b.x) + len * (a.v - b.v) / 8.0 + (len * len * len / 96.0).sqrt() * noise.0;
    let v = 1.5 * (b.x - a.x) / len - 0.25 * (a.v + b.v) + (len / 8.0).sqrt() * noise.1;
    ParticleState {
        x,
        v,
        t: a.t + 0.5 * len,
    }
}

/// Velocity after an inelastic bounce.
pub fn reflect(v_in: f64, r: f64) -> Result<f64> {
    if !(v_in < 0.0) {
        return Err(KfpError::Contract(format!(
            "reflection needs an incoming velocity < 0, got {v_in}"
        )));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(KfpError::Contract(format!(
            "restitution must lie in (0, 1], got {r}"
        )));
    }
    Ok(-r * v_in)
}

/// Step-size control for [`run_to_wall`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Upper bound on any step.
    pub dt_max: f64,
    /// Fraction of the local time scale taken per step.
    pub step_factor: f64,
    /// A wall hit is declared once `x <= eps_x |v|³` with `v < 0`; the last
    /// stretch is completed ballistically.
    pub eps_x: f64,
    /// Absolute time at which the run is abandoned.
    pub t_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt_max: f64::INFINITY,
            step_factor: 0.02,
            eps_x: 1e-6,
            t_max: f64::INFINITY,
        }
    }
}

/// Local time scale, covariant under `(x, v, t) -> (λ³x, λv, λ²t)`.
fn time_scale(x: f64, v: f64) -> f64 {
    let c = x.cbrt();
    if v < 0.0 {
        x / (c - v)
    } else {
        (c + v) * (c + v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WallOutcome {
    /// First wall contact: `state.x = 0`, `state.v = -speed`.
    Hit { state: ParticleState, speed: f64 },
    /// `t_max` reached first.
    TimeLimit(ParticleState),
}

fn hit_at(s: ParticleState) -> WallOutcome {
    let speed = -s.v;
    WallOutcome::Hit {
        state: ParticleState {
            x: 0.0,
            v: s.v,
            t: s.t + s.x / speed,
        },
        speed,
    }
}

/// Integrates free flight from `start` to the first wall contact.
pub fn run_to_wall<N: NoiseSource>(
    start: ParticleState,
    ctl: &StepControl,
    noise: &mut N,
) -> Result<WallOutcome> {
    if !(start.x > 0.0 || (start.x == 0.0 && start.v > 0.0)) {
        return Err(KfpError::Contract(format!(
            "start must satisfy x > 0 or (x = 0, v > 0), got ({}, {})",
            start.x, start.v
        )));
    }
    let mut s = start;
    loop {
        if s.v < 0.0 && s.x <= ctl.eps_x * (-s.v).powi(3) {
            return Ok(hit_at(s));
        }
        if s.t >= ctl.t_max {
            return Ok(WallOutcome::TimeLimit(s));
        }
        let dt = (ctl.step_factor * time_scale(s.x, s.v)).min(ctl.dt_max);
        let xi = (noise.normal(), noise.normal());
        let next = exact_increment(s, dt, xi);
        if next.x >= 0.0 {
            s = next;
            continue;
        }
        return Ok(resolve_crossing(s, next, ctl, noise));
    }
}

/// Bisects `[a, b]` (with `a.x >= 0 > b.x`) by bridge sampling.
fn resolve_crossing<N: NoiseSource>(
    mut a: ParticleState,
    mut b: ParticleState,
    ctl: &StepControl,
    noise: &mut N,
) -> WallOutcome {
    for _ in 0..400 {
        if a.v < 0.0 && a.x <= ctl.eps_x * (-a.v).powi(3) {
            return hit_at(a);
        }
        let xi = (noise.normal(), noise.normal());
        let m = bridge_midpoint(a, b, xi);
        if m.t <= a.t || m.t >= b.t {
            break;
        }
        if m.x < 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    // Interval exhausted at machine resolution: take the crossing at `a`.
    let v = if a.v < 0.0 {
        a.v
    } else {
        b.v.min(-f64::MIN_POSITIVE)
    };
    hit_at(ParticleState { v, ..a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `max_bounces` reached.
    Cutoff,
    /// Speed fell below the floor with the remaining time bound inside `t_max`.
    Collapse,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BounceRecord {
    pub hit_times: Vec<f64>,
    /// Speeds just before each hit.
    pub hit_speeds: Vec<f64>,
    pub terminated: Termination,
}

impl BounceRecord {
    /// `ln(|V_{n+1}| / |V_n|)` over consecutive hits.
    pub fn log_speed_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.hit_speeds.windows(2).map(|w| (w[1] / w[0]).ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub r: f64,
    pub max_bounces: usize,
    pub speed_floor: f64,
    pub t_max: f64,
    pub step: StepControl,
}

impl ChainParams {
    pub fn new(r: f64, max_bounces: usize, speed_floor: f64, t_max: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(KfpError::config(
                "r",
                format!("restitution must lie in (0, 1], got {r}"),
            ));
        }
        if !(speed_floor > 0.0) {
            return Err(KfpError::config("speed_floor", "must be positive"));
        }
        Ok(ChainParams {
            r,
            max_bounces,
            speed_floor,
            t_max,
            step: StepControl {
                t_max,
                ..StepControl::default()
            },
        })
    }
}

/// Runs bounces until the cutoff, a collapse or the time limit.
pub fn bounce_chain_with<N: NoiseSource>(
    p: &ChainParams,
    start: ParticleState,
    noise: &mut N,
) -> Result<BounceRecord> {
    let mut hit_times = Vec::new();
    let mut hit_speeds = Vec::new();
    // Per-bounce contraction of the squared speed, typical over the chain.
    let contraction = (p.r / exponents::critical_r()).powi(2);
    // Legs after a bounce start at the wall and are run at unit speed, then
    // rescaled, so speeds far from one cannot overflow the near-wall tests.
    let mut leg = start;
    let mut scale = 1.0;
    let mut t0 = 0.0;
    let terminated = loop {
        if hit_times.len() >= p.max_bounces {
            break Termination::Cutoff;
        }
        let ctl = StepControl {
            t_max: (p.t_max - t0) / (scale * scale),
            ..p.step
        };
        match run_to_wall(leg, &ctl, noise)? {
            WallOutcome::TimeLimit(_) => break Termination::TimeLimit,
            WallOutcome::Hit { state, speed } => {
                let t = t0 + scale * scale * state.t;
                if t > p.t_max || !t.is_finite() {
                    break Termination::TimeLimit;
                }
                let speed = scale * speed;
                if hit_times.last().is_some_and(|&last| t <= last) {
                    // Bounces no longer advance the clock at double precision.
                    break Termination::Collapse;
                }
                hit_times.push(t);
                hit_speeds.push(speed);
                let v_out = reflect(-speed, p.r)?;
                // Remaining time is of order Σ (speed²) over a geometric sequence.
                if v_out < p.speed_floor
                    && contraction < 1.0
                    && t + v_out * v_out / (1.0 - contraction) < p.t_max
                {
                    break Termination::Collapse;
                }
                leg = ParticleState::new(0.0, 1.0, 0.0);
                scale = v_out;
                t0 = t;
            }
        }
    };
    Ok(BounceRecord {
        hit_times,
        hit_speeds,
        terminated,
    })
}

/// [`bounce_chain_with`] on stream 0 of `seed`.
pub fn bounce_chain(
    r: f64,
    start: ParticleState,
    max_bounces: usize,
    speed_floor: f64,
    t_max: f64,
    seed: u64,
) -> Result<BounceRecord> {
    let p = ChainParams::new(r, max_bounces, speed_floor, t_max)?;
    bounce_chain_with(&p, start, &mut GaussianNoise::for_path(seed, 0))
}

/// Runs `paths` independent chains, path `i` on stream `i`.
pub fn run_chains(
    p: &ChainParams,
    start: ParticleState,
    paths: usize,
    seed: u64,
) -> Result<Vec<BounceRecord>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| bounce_chain_with(p, start, &mut GaussianNoise::for_path(seed, i)))
        .collect()
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// `E[ln |V(t_1)|]` for paths started at the wall with unit outgoing speed.
pub fn first_hit_log_speed(paths: usize, seed: u64, ctl: &StepControl) -> Result<Estimate> {
    let start = ParticleState::new(0.0, 1.0, 0.0);
    let logs: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(
            |i| match run_to_wall(start, ctl, &mut GaussianNoise::for_path(seed, i))? {
                WallOutcome::Hit { speed, .. } => Ok(speed.ln()),
                WallOutcome::TimeLimit(_) => Err(KfpError::Convergence(
                    "first passage hit the time limit".into(),
                )),
            },
        )
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&logs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub r: f64,
    pub paths: usize,
    pub collapse_fraction: f64,
    pub mean_log_ratio: f64,
    pub stderr_log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Zero crossing of the fitted `mean_log_ratio` against `ln r`.
    pub r_hat: f64,
    /// Fitted slope; one in theory.
    pub slope: f64,
    pub total_bounces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub r_grid: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    pub max_bounces: usize,
    pub speed_floor: f64,
    pub t_max: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            r_grid: vec![
                0.03, 0.05, 0.08, 0.1, 0.12, 0.2, 0.25, 0.3, 0.4, 0.5, 0.7, 0.9,
            ],
            paths: 1000,
            seed: 0,
            max_bounces: 40,
            speed_floor: 1e-6,
            // A finite horizon drops the long excursions and biases the ratios low.
            t_max: f64::INFINITY,
        }
    }
}

/// Excluded half-width around `r_c` in [`collapse_threshold_scan`].
pub const SCAN_EXCLUSION: f64 = 0.01;

/// Collapse fractions and mean log speed ratios over a grid of `r`.
pub fn collapse_threshold_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    let rc = exponents::critical_r();
    let mut rows = Vec::new();
    let mut total_bounces = 0;
    for (k, &r) in cfg.r_grid.iter().enumerate() {
        if !(r > 0.02 && r <= 1.0) {
            return Err(KfpError::config("r_grid", format!("{r} outside (0.02, 1]")));
        }
        if (r - rc).abs() < SCAN_EXCLUSION {
            continue;
        }
        let p = ChainParams::new(r, cfg.max_bounces, cfg.speed_floor, cfg.t_max)?;
        let seed = cfg.seed.wrapping_add((k as u64) << 32);
        let records = run_chains(&p, ParticleState::new(0.0, 1.0, 0.0), cfg.paths, seed)?;
        let ratios: Vec<f64> = records
            .iter()
            .flat_map(|rec| rec.log_speed_ratios())
            .collect();
        total_bounces += records
            .iter()
            .map(|rec| rec.hit_speeds.len())
            .sum::<usize>();
        let collapsed = records
            .iter()
            .filter(|rec| rec.terminated == Termination::Collapse)
            .count();
        let est = Estimate::from_samples(&ratios);
        rows.push(ScanRow {
            r,
            paths: cfg.paths,
            collapse_fraction: collapsed as f64 / cfg.paths as f64,
            mean_log_ratio: est.mean,
            stderr_log_ratio: est.stderr,
        });
    }
    if rows.len() < 2 {
        return Err(KfpError::config(
            "r_grid",
            "need at least two grid values away from r_c",
        ));
    }
    // Weighted least squares of mean_log_ratio on ln r.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for row in &rows {
        let w = 1.0 / row.stderr_log_ratio.max(1e-12).powi(2);
        let x = row.r.ln();
        sw += w;
        sx += w * x;
        sy += w * row.mean_log_ratio;
        sxx += w * x * x;
        sxy += w * x * row.mean_log_ratio;
    }
    let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    let intercept = (sy - slope * sx) / sw;
    Ok(ScanReport {
        rows,
        r_hat: (-intercept / slope).exp(),
        slope,
        total_bounces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_increment_is_ballistic() {
        let s = exact_increment(ParticleState::new(1.0, -0.5, 0.0), 0.3, (0.0, 0.0));
        assert_eq!((s.x, s.v, s.t), (1.0 - 0.15, -0.5, 0.3));
    }

    #[test]
    fn reflection_contract() {
        assert_eq!(reflect(-1.0, 0.5).unwrap(), 0.5);
        assert_eq!(reflect(-2.0, 1.0).unwrap(), 2.0);
        assert!((reflect(-0.1, 0.16303).unwrap() - 0.016303).abs() < 1e-15);
        assert!(reflect(0.1, 0.5).is_err());
    }

    #[test]
    fn ballistic_hit() {
        let out = run_to_wall(
            ParticleState::new(1.0, -1.0, 0.0),
            &StepControl::default(),
            &mut ZeroNoise,
        )
        .unwrap();
        match out {
            WallOutcome::Hit { state, speed } => {
                assert!((state.t - 1.0).abs() < 1e-12);
                assert_eq!(speed, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ballistic_chain_has_one_bounce() {
        let p = ChainParams::new(0.5, 10, 1e-6, 50.0).unwrap();
        let rec =
            bounce_chain_with(&p, ParticleState::new(1.0, -1.0, 0.0), &mut ZeroNoise).unwrap();
        assert_eq!(rec.hit_speeds, vec![1.0]);
        assert_eq!(rec.terminated, Termination::TimeLimit);
    }

    #[test]
    fn bridge_midpoint_mean() {
        // zero noise on a ballistic segment returns the ballistic midpoint
        let a = ParticleState::new(1.0, -2.0, 0.0);
        let b = ParticleState::new(-1.0, -2.0, 1.0);
        let m = bridge_midpoint(a, b, (0.0, 0.0));
        assert!((m.x).abs() < 1e-15 && (m.v + 2.0).abs() < 1e-15 && m.t == 0.5);
    }

    #[test]
    fn same_seed_same_record() {
        let a = bounce_chain(0.3, ParticleState::new(0.0, 1.0, 0.0), 20, 1e-6, 50.0, 7).unwrap();
        let b = bounce_chain(0.3, ParticleState::new(0.0, 1.0, 0.0), 20, 1e-6, 50.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.hit_times.windows(2).all(|w| w[1] > w[0]));
    }
}
