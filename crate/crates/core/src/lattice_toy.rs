//! Random walk on the half lattice `{0, h, 2h, ...}` with a sticky wall site,
//! and the continuum heat-equation references it converges to.
//!
//! A walker at `n >= 1` moves to `n ± 1` with probability 1/2. A walker at the
//! wall site `0` moves to `1` with probability `λ` and stays otherwise. Time
//! step `h²`, so the continuum limit is `U_t = U_xx / 2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{KfpError, Result};

/// Wall rule of the lattice walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WallRule {
    /// `λ = 0`: the wall site is absorbing.
    Trapping,
    /// Fixed escape probability `λ ∈ (0, 1]`.
    Nontrapping { lambda: f64 },
    /// `λ = μh`: the walker leaves the wall at rate `μ/h` per unit time.
    Partial { mu: f64 },
}

impl WallRule {
    pub fn name(&self) -> &'static str {
        match self {
            WallRule::Trapping => "trapping",
            WallRule::Nontrapping { .. } => "nontrapping",
            WallRule::Partial { .. } => "partial",
        }
    }

    /// Escape probability at lattice spacing `h`.
    pub fn escape_probability(&self, h: f64) -> f64 {
        match *self {
            WallRule::Trapping => 0.0,
            WallRule::Nontrapping { lambda } => lambda,
            WallRule::Partial { mu } => mu * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub h: f64,
    pub rule: WallRule,
    /// Initial occupancy `P_n(0)`, summing to one.
    pub init: Vec<f64>,
}

impl LatticeConfig {
    pub fn new(h: f64, rule: WallRule, init: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(KfpError::config(
                "h",
                format!("lattice spacing must be positive, got {h}"),
            ));
        }
        match rule {
            WallRule::Nontrapping { lambda } if !(lambda > 0.0 && lambda <= 1.0) => {
                return Err(KfpError::config(
                    "lambda",
                    format!("must lie in (0, 1], got {lambda}"),
                ));
            }
            WallRule::Partial { mu } if !(mu > 0.0 && mu * h <= 1.0) => {
                return Err(KfpError::config(
                    "mu",
                    format!("need 0 < μh <= 1, got μ = {mu}"),
                ));
            }
            _ => {}
        }
        if init.is_empty() || init.iter().any(|p| !(*p >= 0.0)) {
            return Err(KfpError::config(
                "init",
                "occupancy must be a nonempty nonnegative vector",
            ));
        }
        let total: f64 = init.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KfpError::config(
                "init",
                format!("occupancy sums to {total}, not 1"),
            ));
        }
        Ok(LatticeConfig { h, rule, init })
    }

    /// All mass on the site nearest to `x0`.
    pub fn point_mass(h: f64, rule: WallRule, x0: f64) -> Result<Self> {
        let n = (x0 / h).round() as usize;
        let mut init = vec![0.0; n + 1];
        init[n] = 1.0;
        Self::new(h, rule, init)
    }

    pub fn escape_probability(&self) -> f64 {
        self.rule.escape_probability(self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub occupancy: Vec<f64>,
    pub k: u64,
}

impl LatticeState {
    /// Initial state padded with empty sites up to `sites`.
    pub fn new(init: &[f64], sites: usize) -> Self {
        let mut occupancy = init.to_vec();
        if occupancy.len() < sites {
            occupancy.resize(sites, 0.0);
        }
        LatticeState { occupancy, k: 0 }
    }

    pub fn mass(&self) -> f64 {
        self.occupancy.iter().sum()
    }
}

/// One synchronous update. The last site reflects: its outward half stays put.
pub fn step_lattice(state: &LatticeState, cfg: &LatticeConfig) -> LatticeState {
    let mut next = vec![0.0; state.occupancy.len()];
    step_into(&state.occupancy, &mut next, cfg.escape_probability());
    LatticeState {
        occupancy: next,
        k: state.k + 1,
    }
}

fn step_into(p: &[f64], next: &mut [f64], lambda: f64) {
    let n = p.len();
    if n == 1 {
        next[0] = p[0];
        return;
    }
    next[0] = 0.5 * p[1] + (1.0 - lambda) * p[0];
    let p2 = if n > 2 { p[2] } else { 0.0 };
    next[1] = 0.5 * p2 + lambda * p[0];
    for i in 2..n - 1 {
        next[i] = 0.5 * (p[i - 1] + p[i + 1]);
    }
    if n > 2 {
        next[n - 1] = 0.5 * p[n - 2] + 0.5 * p[n - 1];
    } else {
        // two sites: site 1 reflects its outward half
        next[1] += 0.5 * p[1];
    }
}

/// Advances `steps` updates in place.
pub fn run_lattice(state: &mut LatticeState, cfg: &LatticeConfig, steps: u64) {
    let lambda = cfg.escape_probability();
    let mut buf = vec![0.0; state.occupancy.len()];
    for _ in 0..steps {
        step_into(&state.occupancy, &mut buf, lambda);
        std::mem::swap(&mut state.occupancy, &mut buf);
    }
    state.k += steps;
}

/// Rescaled lattice occupancy at a physical time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSnapshot {
    pub h: f64,
    pub t: f64,
    /// Positions `nh`, `n >= 1`.
    pub x: Vec<f64>,
    /// `P_n / h`, averaged over two consecutive steps to remove the period-2
    /// parity of the walk.
    pub density: Vec<f64>,
    /// Mass on the wall site.
    pub m_h: f64,
}

impl LatticeSnapshot {
    /// `Σ |U_h(nh) - U_ref(nh)| h`.
    pub fn l1_gap<F: Fn(f64) -> f64>(&self, reference: F) -> f64 {
        self.x
            .iter()
            .zip(&self.density)
            .map(|(&x, &u)| (u - reference(x)).abs() * self.h)
            .sum()
    }

    /// `U_h(0)` by linear extrapolation from the first two sites.
    pub fn boundary_density(&self) -> f64 {
        2.0 * self.density[0] - self.density[1]
    }

    /// `∫ U_h + m_h`.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.h + self.m_h
    }
}

/// Number of lattice sites used for a run to `t_phys`: ten standard deviations
/// beyond the initial support.
pub fn lattice_sites(cfg: &LatticeConfig, t_phys: f64) -> usize {
    (10.0 * t_phys.sqrt() / cfg.h).ceil() as usize + cfg.init.len() + 2
}

/// Runs the walk to `t_phys` (an integer number of steps `h²`) and rescales.
pub fn diffusive_limit(cfg: &LatticeConfig, t_phys: f64) -> Result<LatticeSnapshot> {
    let steps_f = t_phys / (cfg.h * cfg.h);
    let steps = steps_f.round();
    if !(t_phys > 0.0) || (steps_f - steps).abs() > 1e-6 * steps.max(1.0) {
        return Err(KfpError::config(
            "t",
            format!("t/h² = {steps_f} is not a positive integer number of steps"),
        ));
    }
    let mut state = LatticeState::new(&cfg.init, lattice_sites(cfg, t_phys));
    run_lattice(&mut state, cfg, steps as u64);
    let now = state.occupancy.clone();
    run_lattice(&mut state, cfg, 1);
    let avg: Vec<f64> = now
        .iter()
        .zip(&state.occupancy)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let x = (1..avg.len()).map(|n| n as f64 * cfg.h).collect();
    let density = avg[1..].iter().map(|p| p / cfg.h).collect();
    Ok(LatticeSnapshot {
        h: cfg.h,
        t: t_phys,
        x,
        density,
        m_h: avg[0],
    })
}

fn heat_kernel(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `U_t = U_xx/2` on `x > 0` with `U(0, t) = 0`, started from a unit mass at `x0`.
pub fn dirichlet_reference(x: f64, x0: f64, t: f64) -> f64 {
    heat_kernel(x - x0, t) - heat_kernel(x + x0, t)
}

/// As [`dirichlet_reference`] with `U_x(0, t) = 0`.
pub fn neumann_reference(x: f64, x0: f64, t: f64) -> f64 {
    heat_kernel(x - x0, t) + heat_kernel(x + x0, t)
}

/// Discretization of the Robin reference solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinGrid {
    pub dx: f64,
    pub dt: f64,
}

impl Default for RobinGrid {
    fn default() -> Self {
        RobinGrid { dx: 2e-3, dt: 2e-5 }
    }
}

/// Continuum solution with a wall atom: `U_t = U_xx/2`, `m' = U_x(0)/2`, `U(0) = 2μm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinSolution {
    pub dx: f64,
    /// Cell-centred density, cell `i` centred at `(i + 1/2) dx`.
    pub density: Vec<f64>,
    pub m: f64,
    /// Largest `|∫U + m - 1|` seen over the steps.
    pub max_mass_drift: f64,
}

impl RobinSolution {
    /// Linear interpolation between cell centres, extrapolated linearly below the first one.
    pub fn density_at(&self, x: f64) -> f64 {
        let s = x / self.dx - 0.5;
        if s <= 0.0 {
            let d0 = self.density[0];
            let d1 = self.density.get(1).copied().unwrap_or(d0);
            return d0 + s * (d1 - d0);
        }
        let i = s.floor() as usize;
        if i + 1 >= self.density.len() {
            return *self.density.last().unwrap_or(&0.0);
        }
        let f = s - i as f64;
        (1.0 - f) * self.density[i] + f * self.density[i + 1]
    }

    pub fn l1_distance(&self, other: &RobinSolution) -> f64 {
        let n = self.density.len();
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * self.dx;
                (self.density[i] - other.density_at(x)).abs() * self.dx
            })
            .sum::<f64>()
            + (self.m - other.m).abs()
    }
}

/// Backward Euler, cell-centred solve of the wall-atom problem started from a
/// unit mass at `x0`. `μ = 0` gives the absorbing wall, large `μ` approaches
/// the reflecting one.
///
/// The point mass is replaced by the free heat kernel at a short warm-up time,
/// which is exact to `e^{-x0²/(2 t_0)}`.
pub fn robin_reference(mu: f64, x0: f64, t: f64, grid: RobinGrid) -> Result<RobinSolution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(KfpError::config(
            "mu",
            format!("must be nonnegative, got {mu}"),
        ));
    }
    if !(x0 > 0.0 && t > 0.0) {
        return Err(KfpError::config("x0", "need x0 > 0 and t > 0"));
    }
    let t0 = (x0 * x0 / 80.0).min(0.5 * t);
    let (dx, dt) = (grid.dx, grid.dt);
    let length = x0 + 10.0 * t.sqrt() + 1.0;
    let cells = (length / dx).ceil() as usize;
    let mut u: Vec<f64> = (0..cells)
        .map(|i| heat_kernel((i as f64 + 0.5) * dx - x0, t0))
        .collect();
    let total: f64 = u.iter().sum::<f64>() * dx;
    u.iter_mut().for_each(|v| *v /= total);
    let mut m = 0.0;

    let diff = 0.5;
    let c = diff * dt / (dx * dx);
    // Unknowns y = (m, U_0, ..., U_{N-1}); tridiagonal rows.
    let n = cells + 1;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    diag[0] = 1.0 + 2.0 * diff * dt / dx * 2.0 * mu;
    upper[0] = -2.0 * diff * dt / dx;
    lower[1] = -4.0 * mu * c;
    diag[1] = 1.0 + 3.0 * c;
    upper[1] = -c;
    for i in 2..n - 1 {
        lower[i] = -c;
        diag[i] = 1.0 + 2.0 * c;
        upper[i] = -c;
    }
    lower[n - 1] = -c;
    diag[n - 1] = 1.0 + c;

    let steps = ((t - t0) / dt).round().max(1.0) as usize;
    let dt_eff = (t - t0) / steps as f64;
    if (dt_eff - dt).abs() > 0.5 * dt {
        return Err(KfpError::config(
            "dt",
            "time step too large for the requested horizon",
        ));
    }
    let mut rhs = vec![0.0; n];
    let mut work = vec![0.0; n];
    let mut max_drift = 0.0_f64;
    for _ in 0..steps {
        rhs[0] = m;
        rhs[1..].copy_from_slice(&u);
        thomas(&lower, &diag, &upper, &mut rhs, &mut work);
        m = rhs[0];
        u.copy_from_slice(&rhs[1..]);
        let mass = u.iter().sum::<f64>() * dx + m;
        max_drift = max_drift.max((mass - 1.0).abs());
    }
    Ok(RobinSolution {
        dx,
        density: u,
        m,
        max_mass_drift: max_drift,
    })
}

/// In-place tridiagonal solve.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], work: &mut [f64]) {
    let n = diag.len();
    work[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * work[i - 1];
        work[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= work[i] * rhs[i + 1];
    }
}

/// Robin reference together with its own refinement check: the solve is
/// repeated with `dx` and `dt` halved and the L1 distance reported.
pub fn robin_reference_checked(mu: f64, x0: f64, t: f64) -> Result<(RobinSolution, f64)> {
    let base = RobinGrid::default();
    let fine = RobinGrid {
        dx: 0.5 * base.dx,
        dt: 0.5 * base.dt,
    };
    let coarse = robin_reference(mu, x0, t, base)?;
    let refined = robin_reference(mu, x0, t, fine)?;
    let gap = refined.l1_distance(&coarse);
    if gap > 1e-3 {
        return Err(KfpError::Convergence(format!(
            "Robin reference not converged under refinement: L1 change {gap:e}"
        )));
    }
    Ok((refined, gap))
}

/// Summary of one lattice experiment against its continuum reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub mode: String,
    pub h: f64,
    pub t: f64,
    #[serde(rename = "L1_gap")]
    pub l1_gap: f64,
    pub m_h: f64,
    pub m_ref: f64,
}

/// Runs the walk from a point mass at `x0` and compares with the matching reference.
pub fn compare_with_reference(
    h: f64,
    rule: WallRule,
    x0: f64,
    t: f64,
) -> Result<(ToySummary, LatticeSnapshot, Vec<f64>)> {
    let cfg = LatticeConfig::point_mass(h, rule, x0)?;
    let snap = diffusive_limit(&cfg, t)?;
    let (reference, m_ref): (Vec<f64>, f64) = match rule {
        WallRule::Trapping => {
            let r: Vec<f64> = snap
                .x
                .iter()
                .map(|&x| dirichlet_reference(x, x0, t))
                .collect();
            let sol = robin_reference(0.0, x0, t, RobinGrid::default())?;
            (r, sol.m)
        }
        WallRule::Nontrapping { .. } => {
            let r = snap
                .x
                .iter()
                .map(|&x| neumann_reference(x, x0, t))
                .collect();
            (r, 0.0)
        }
        WallRule::Partial { mu } => {
            let (sol, _) = robin_reference_checked(mu, x0, t)?;
            let r = snap.x.iter().map(|&x| sol.density_at(x)).collect();
            (r, sol.m)
        }
    };
    let l1_gap = snap
        .density
        .iter()
        .zip(&reference)
        .map(|(u, r)| (u - r).abs() * h)
        .sum();
    Ok((
        ToySummary {
            mode: rule.name().to_string(),
            h,
            t,
            l1_gap,
            m_h: snap.m_h,
            m_ref,
        },
        snap,
        reference,
    ))
}
