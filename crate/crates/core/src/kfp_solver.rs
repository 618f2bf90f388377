//! Finite volume solver for `∂_t P + v ∂_x P = ∂_vv P` on `x > 0` with the
//! inelastic wall law, plus the near-origin amplitude fit and the mass ledger.
//!
//! Cells are tensor products of an `x` grid starting at the wall and a velocity
//! grid whose positive half is the negative half scaled by `r`, so the wall law
//! pairs cells exactly. Mass that enters the excised corner `x + |v|³ < ρ_cut`
//! is booked to the ledger `m(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{KfpError, Result};
use crate::exponents;
use crate::profiles::{self, PhasePoint};

/// Growth ratio of neighbouring cells in the graded part of a grid.
pub const DEFAULT_GROWTH: f64 = 1.08;
/// Growth ratio of the velocity cells beyond `v_max` that complete the pairing.
pub const TAIL_GROWTH: f64 = 1.15;
/// Minimum number of cells per direction.
pub const MIN_CELLS: usize = 32;
/// Default fit band: cells with `ρ/band <= x + |v|³ <= band·ρ` enter the fit.
///
/// `G_α` and `G_{-2/3}` differ mostly through the radial factor `ρ^{α+2/3}`,
/// so a narrow band leaves the two amplitudes nearly collinear.
pub const DEFAULT_FIT_BAND: f64 = 10.0;
/// Fits with a larger relative misfit are flagged unreliable.
pub const FIT_UNRELIABLE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r: f64,
    pub x_max: f64,
    pub v_max: f64,
    pub n_x: usize,
    /// Velocity cells per sign inside `|v| <= v_max`.
    pub n_v: usize,
    /// Width of the wall cell.
    pub x_first: f64,
    /// Width of the first velocity cell on each side of the zero cell.
    pub v_first: f64,
    pub growth: f64,
}

impl GridSpec {
    /// Graded grid with the default near-origin resolution.
    pub fn graded(r: f64, x_max: f64, v_max: f64, n_x: usize, n_v: usize) -> Self {
        GridSpec {
            r,
            x_max,
            v_max,
            n_x,
            n_v,
            x_first: 1e-8 * x_max,
            v_first: 1e-3 * v_max,
            growth: DEFAULT_GROWTH,
        }
    }

    /// Equal cells in `x` and in `|v| <= v_max`.
    pub fn uniform(r: f64, x_max: f64, v_max: f64, n_x: usize, n_v: usize) -> Self {
        GridSpec {
            r,
            x_max,
            v_max,
            n_x,
            n_v,
            x_first: x_max / n_x as f64,
            v_first: v_max / (n_v as f64 + 0.5),
            growth: 1.0,
        }
    }

    pub fn build(&self) -> Result<Grid> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(KfpError::config(
                "r",
                format!("restitution must lie in (0, 1], got {}", self.r),
            ));
        }
        if self.n_x < MIN_CELLS || self.n_v < MIN_CELLS {
            return Err(KfpError::config(
                "n_x/n_v",
                format!("need at least {MIN_CELLS} cells per direction"),
            ));
        }
        for (name, val) in [
            ("x_max", self.x_max),
            ("v_max", self.v_max),
            ("x_first", self.x_first),
            ("v_first", self.v_first),
        ] {
            if !(val.is_finite() && val > 0.0) {
                return Err(KfpError::config(
                    name,
                    format!("must be positive and finite, got {val}"),
                ));
            }
        }
        if !(self.growth >= 1.0) {
            return Err(KfpError::config("growth", "must be >= 1"));
        }
        let x_widths = graded_widths("x_first", self.x_first, self.growth, self.x_max, self.n_x)?;
        let mut x_edges = Vec::with_capacity(self.n_x + 1);
        x_edges.push(0.0);
        let mut acc = 0.0;
        for w in &x_widths {
            acc += w;
            x_edges.push(acc);
        }
        *x_edges.last_mut().unwrap() = self.x_max;

        let e0 = 0.5 * self.v_first;
        let v_widths = graded_widths(
            "v_first",
            self.v_first,
            self.growth,
            self.v_max - e0,
            self.n_v,
        )?;
        let mut speed_edges = vec![e0];
        for w in &v_widths {
            let last = *speed_edges.last().unwrap();
            speed_edges.push(last + w);
        }
        *speed_edges.last_mut().unwrap() = self.v_max;
        // Extend the magnitudes so that the positive side also reaches v_max.
        let reach = self.v_max / self.r;
        let mut w = *v_widths.last().unwrap();
        while *speed_edges.last().unwrap() * (1.0 + 1e-12) < reach {
            w *= TAIL_GROWTH;
            let last = *speed_edges.last().unwrap();
            speed_edges.push((last + w).min(reach));
        }
        Ok(Grid::from_edges(self.r, x_edges, speed_edges))
    }
}

/// Widths `min(first·q^i, cap)` summing to `extent`, with `q >= growth` raised
/// only when the plain geometric sequence cannot reach `extent`.
fn graded_widths(field: &str, first: f64, growth: f64, extent: f64, n: usize) -> Result<Vec<f64>> {
    if first * n as f64 > extent * (1.0 + 1e-12) {
        return Err(KfpError::config(
            field,
            format!("{n} cells of width {first} overflow the extent {extent}"),
        ));
    }
    let geometric_sum = |q: f64| {
        if q == 1.0 {
            first * n as f64
        } else {
            first * (q.powi(n as i32) - 1.0) / (q - 1.0)
        }
    };
    let mut q = growth;
    if geometric_sum(q) < extent {
        let (mut lo, mut hi) = (q, 2.0 * q);
        while geometric_sum(hi) < extent {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if geometric_sum(mid) < extent {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        q = hi;
    }
    let sum_capped = |cap: f64| {
        (0..n)
            .map(|i| (first * q.powi(i as i32)).min(cap))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (first, extent);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_capped(mid) < extent {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cap = 0.5 * (lo + hi);
    Ok((0..n)
        .map(|i| (first * q.powi(i as i32)).min(cap))
        .collect())
}

/// Tensor grid of `x` cells and paired velocity cells.
///
/// Velocity cells are ordered by increasing `v`: the negative cells
/// `[-e_{k+1}, -e_k]`, one zero cell `[-e_0, r e_0]` and the positive cells
/// `[r e_k, r e_{k+1}]`. The positive node of each pair is `r` times the
/// magnitude of the negative node, bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    r: f64,
    x_edges: Vec<f64>,
    x_nodes: Vec<f64>,
    x_widths: Vec<f64>,
    v_nodes: Vec<f64>,
    v_widths: Vec<f64>,
    pairs: usize,
}

impl Grid {
    fn from_edges(r: f64, x_edges: Vec<f64>, speed_edges: Vec<f64>) -> Self {
        let x_nodes = x_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let x_widths = x_edges.windows(2).map(|w| w[1] - w[0]).collect();
        let pairs = speed_edges.len() - 1;
        let magnitudes: Vec<f64> = speed_edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        let widths: Vec<f64> = speed_edges.windows(2).map(|w| w[1] - w[0]).collect();
        let mut v_nodes = Vec::with_capacity(2 * pairs + 1);
        let mut v_widths = Vec::with_capacity(2 * pairs + 1);
        for k in (0..pairs).rev() {
            v_nodes.push(-magnitudes[k]);
            v_widths.push(widths[k]);
        }
        v_nodes.push(0.0);
        v_widths.push((1.0 + r) * speed_edges[0]);
        for k in 0..pairs {
            v_nodes.push(r * magnitudes[k]);
            v_widths.push(r * widths[k]);
        }
        Grid {
            r,
            x_edges,
            x_nodes,
            x_widths,
            v_nodes,
            v_widths,
            pairs,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn n_x(&self) -> usize {
        self.x_nodes.len()
    }

    /// Number of velocity cells, `2·pairs + 1`.
    pub fn n_v(&self) -> usize {
        self.v_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_x() * self.n_v()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.x_edges
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn x_widths(&self) -> &[f64] {
        &self.x_widths
    }

    pub fn v_nodes(&self) -> &[f64] {
        &self.v_nodes
    }

    pub fn v_widths(&self) -> &[f64] {
        &self.v_widths
    }

    /// Index of the zero-velocity cell.
    pub fn zero_index(&self) -> usize {
        self.pairs
    }

    /// Magnitudes `u_k` of the negative nodes, nearest to zero first.
    pub fn v_minus(&self) -> Vec<f64> {
        (0..self.pairs)
            .map(|k| -self.v_nodes[self.pairs - 1 - k])
            .collect()
    }

    /// Positive nodes `r·u_k`, nearest to zero first.
    pub fn v_plus(&self) -> Vec<f64> {
        self.v_nodes[self.pairs + 1..].to_vec()
    }

    /// Negative partner of a positive velocity index.
    pub fn partner(&self, j: usize) -> Option<usize> {
        (j > self.pairs && j < self.n_v()).then(|| 2 * self.pairs - j)
    }

    /// Flat index of cell `(i, j)`; velocity varies fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_v() + j
    }

    pub fn volume(&self, i: usize, j: usize) -> f64 {
        self.x_widths[i] * self.v_widths[j]
    }

    /// `∫ P dx dv` of a cell-average field.
    pub fn integrate(&self, density: &[f64]) -> f64 {
        density
            .chunks(self.n_v())
            .zip(&self.x_widths)
            .map(|(col, dx)| {
                dx * col
                    .iter()
                    .zip(&self.v_widths)
                    .map(|(p, dv)| p * dv)
                    .sum::<f64>()
            })
            .sum()
    }

    /// `∫ |a - b| dx dv`.
    pub fn l1_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p - q).abs()).collect();
        self.integrate(&diff)
    }
}

/// Graded grid with default near-origin resolution.
pub fn build_grid(r: f64, x_max: f64, v_max: f64, n_x: usize, n_v: usize) -> Result<Grid> {
    GridSpec::graded(r, x_max, v_max, n_x, n_v).build()
}

/// Values `P(0, r u) = r⁻² P(0, -u)` for the incoming cells of the wall column;
/// non-positive velocity slots are left at zero.
pub fn apply_wall_bc(grid: &Grid, density: &[f64]) -> Vec<f64> {
    let nv = grid.n_v();
    let inv_r2 = 1.0 / (grid.r * grid.r);
    (0..nv)
        .map(|j| grid.partner(j).map_or(0.0, |jm| inv_r2 * density[jm]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Implicit Euler for transport and diffusion together.
    #[default]
    Implicit,
    /// Explicit upwind transport followed by implicit diffusion; needs
    /// `dt <= Δx/|v|` on every active cell.
    ExplicitTransport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    #[default]
    Inelastic,
    /// No flux through `x = 0` at all. Test hook.
    Sealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub dt: f64,
    /// Cells with `x + |v|³ < rho_cut` are removed; zero disables excision.
    pub rho_cut: f64,
    pub stepping: Stepping,
    pub wall: WallKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub density: Vec<f64>,
    pub t: f64,
    /// Mass absorbed at the corner.
    pub m: f64,
    /// Mass lost through `x = x_max`.
    pub outflow: f64,
    pub initial_total: f64,
}

impl SolverState {
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        grid.integrate(&self.density)
    }

    /// `∫P + m + outflow - initial`.
    pub fn ledger_gap(&self, grid: &Grid) -> f64 {
        self.total_mass(grid) + self.m + self.outflow - self.initial_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Gaussian {
        center: [f64; 2],
        covariance: [[f64; 2]; 2],
    },
    /// `G_{-2/3}` times a smooth cutoff at `x + |v|³ = radius`.
    ProfileCutoff { radius: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian {
            center: [1.0, 0.0],
            covariance: [[0.04, 0.0], [0.0, 0.25]],
        }
    }
}

fn gaussian_density(center: [f64; 2], cov: [[f64; 2]; 2], x: f64, v: f64) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dv) = (x - center[0], v - center[1]);
    let q = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dv + cov[0][0] * dv * dv) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// Free-space fundamental solution started from `δ(x0, v0)`: Gaussian with
/// mean `(x0 + v0 t, v0)`, `Var v = 2t`, `Var x = 2t³/3`, `Cov = t²`.
pub fn kolmogorov_kernel(x0: f64, v0: f64, t: f64, x: f64, v: f64) -> f64 {
    let cov = [[2.0 * t * t * t / 3.0, t * t], [t * t, 2.0 * t]];
    gaussian_density([x0 + v0 * t, v0], cov, x, v)
}

/// Banded LU without pivoting, for the M-matrices of the implicit step.
///
/// Elimination on an M-matrix keeps `L` and `U` sign-regular, so solving with a
/// nonnegative right side only ever adds nonnegative terms.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    w: usize,
    a: Vec<f64>,
}

impl BandLu {
    fn zeros(n: usize, w: usize) -> Self {
        BandLu {
            n,
            w,
            a: vec![0.0; n * (2 * w + 1)],
        }
    }

    fn at(&mut self, row: usize, col: usize) -> &mut f64 {
        let stride = 2 * self.w + 1;
        &mut self.a[row * stride + col + self.w - row]
    }

    fn factor(&mut self) -> Result<()> {
        let (n, w) = (self.n, self.w);
        let stride = 2 * w + 1;
        for k in 0..n {
            let piv = self.a[k * stride + w];
            if !(piv > 0.0) {
                return Err(KfpError::Convergence(format!(
                    "nonpositive pivot {piv} in row {k}"
                )));
            }
            let end = (k + w + 1).min(n);
            let (head, tail) = self.a.split_at_mut((k + 1) * stride);
            let pivot_row = &head[k * stride + w + 1..k * stride + w + 1 + (end - k - 1)];
            for i in k + 1..end {
                let row = &mut tail[(i - k - 1) * stride..(i - k) * stride];
                let lk = k + w - i;
                if row[lk] == 0.0 {
                    continue;
                }
                let l = row[lk] / piv;
                row[lk] = l;
                let start = lk + 1;
                for (dst, src) in row[start..start + pivot_row.len()]
                    .iter_mut()
                    .zip(pivot_row)
                {
                    *dst -= l * src;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        let stride = 2 * w + 1;
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let row = &self.a[i * stride..];
            let mut s = b[i];
            for k in lo..i {
                s -= row[k + w - i] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + w + 1).min(n);
            let row = &self.a[i * stride..];
            let mut s = b[i];
            for c in i + 1..hi {
                s -= row[c + w - i] * b[c];
            }
            b[i] = s / row[w];
        }
    }
}

/// One solver instance on a fixed grid and step.
#[derive(Debug, Clone)]
pub struct Solver {
    grid: Grid,
    opts: SolverOptions,
    excised: Vec<bool>,
    implicit: Option<BandLu>,
}

impl Solver {
    pub fn new(grid: Grid, opts: SolverOptions) -> Result<Self> {
        if !(opts.dt.is_finite() && opts.dt > 0.0) {
            return Err(KfpError::config(
                "dt",
                format!("must be positive, got {}", opts.dt),
            ));
        }
        if !(opts.rho_cut >= 0.0) {
            return Err(KfpError::config("rho_cut", "must be nonnegative"));
        }
        let (nx, nv) = (grid.n_x(), grid.n_v());
        let mut excised = vec![false; nx * nv];
        for i in 0..nx {
            for j in 0..nv {
                let rho = grid.x_nodes[i] + grid.v_nodes[j].abs().powi(3);
                excised[grid.index(i, j)] = rho < opts.rho_cut;
            }
        }
        let mut solver = Solver {
            grid,
            opts,
            excised,
            implicit: None,
        };
        match opts.stepping {
            Stepping::Implicit => {
                let mut lu = solver.assemble_implicit();
                lu.factor()?;
                solver.implicit = Some(lu);
            }
            Stepping::ExplicitTransport => {
                let limit = solver.cfl_limit();
                if opts.dt > limit {
                    return Err(KfpError::config(
                        "dt",
                        format!(
                            "explicit transport needs dt <= {limit:e} (CFL), got {}",
                            opts.dt
                        ),
                    ));
                }
            }
        }
        Ok(solver)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn is_excised(&self, i: usize, j: usize) -> bool {
        self.excised[self.grid.index(i, j)]
    }

    pub fn excised_count(&self) -> usize {
        self.excised.iter().filter(|&&e| e).count()
    }

    /// Largest stable explicit transport step.
    pub fn cfl_limit(&self) -> f64 {
        let mut limit = f64::INFINITY;
        for i in 0..self.grid.n_x() {
            for (j, v) in self.grid.v_nodes.iter().enumerate() {
                if *v != 0.0 && !self.is_excised(i, j) {
                    limit = limit.min(self.grid.x_widths[i] / v.abs());
                }
            }
        }
        limit
    }

    /// Cell-sampled initial data normalized to unit mass, zero on excised cells.
    pub fn initial_state(&self, data: &InitialData) -> Result<SolverState> {
        let g = &self.grid;
        let mut density = vec![0.0; g.len()];
        for i in 0..g.n_x() {
            for j in 0..g.n_v() {
                if self.is_excised(i, j) {
                    continue;
                }
                let (x, v) = (g.x_nodes[i], g.v_nodes[j]);
                density[g.index(i, j)] = match data {
                    InitialData::Gaussian { center, covariance } => {
                        let det = covariance[0][0] * covariance[1][1]
                            - covariance[0][1] * covariance[1][0];
                        if !(covariance[0][0] > 0.0 && det > 0.0) {
                            return Err(KfpError::config(
                                "initial.covariance",
                                "must be positive definite",
                            ));
                        }
                        gaussian_density(*center, *covariance, x, v)
                    }
                    InitialData::ProfileCutoff { radius } => {
                        let rho = x + v.abs().powi(3);
                        if rho >= *radius {
                            0.0
                        } else {
                            let taper = 1.0 - (rho / radius).powi(2);
                            profiles::g_gamma(exponents::TRIVIAL_ROOT, PhasePoint::new(x, v))?
                                * taper
                                * taper
                        }
                    }
                };
            }
        }
        let total = g.integrate(&density);
        if !(total > 0.0 && total.is_finite()) {
            return Err(KfpError::config(
                "initial",
                "initial data has no mass on the grid",
            ));
        }
        density.iter_mut().for_each(|p| *p /= total);
        Ok(SolverState {
            density,
            t: 0.0,
            m: 0.0,
            outflow: 0.0,
            initial_total: 1.0,
        })
    }

    /// Same as [`Solver::initial_state`] but from an arbitrary point function.
    pub fn state_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> SolverState {
        let g = &self.grid;
        let mut density = vec![0.0; g.len()];
        for i in 0..g.n_x() {
            for j in 0..g.n_v() {
                if !self.is_excised(i, j) {
                    density[g.index(i, j)] = f(g.x_nodes[i], g.v_nodes[j]);
                }
            }
        }
        let total = g.integrate(&density);
        SolverState {
            density,
            t: 0.0,
            m: 0.0,
            outflow: 0.0,
            initial_total: total,
        }
    }

    fn outflow_rate(&self, density: &[f64]) -> f64 {
        let g = &self.grid;
        let i = g.n_x() - 1;
        (0..g.n_v())
            .filter(|&j| g.v_nodes[j] > 0.0)
            .map(|j| g.v_nodes[j] * density[g.index(i, j)] * g.v_widths[j])
            .sum()
    }

    /// Diffusion coefficients `(lower, upper)` of cell `j` per unit volume.
    fn diffusion_coefficients(&self, j: usize) -> (f64, f64) {
        let v = &self.grid.v_nodes;
        let dv = self.grid.v_widths[j];
        let lower = if j > 0 {
            1.0 / ((v[j] - v[j - 1]) * dv)
        } else {
            0.0
        };
        let upper = if j + 1 < v.len() {
            1.0 / ((v[j + 1] - v[j]) * dv)
        } else {
            0.0
        };
        (lower, upper)
    }

    fn assemble_implicit(&self) -> BandLu {
        let g = &self.grid;
        let (nx, nv) = (g.n_x(), g.n_v());
        let mut lu = BandLu::zeros(nx * nv, nv);
        let inv_dt = 1.0 / self.opts.dt;
        let inv_r2 = 1.0 / (g.r * g.r);
        for i in 0..nx {
            let dx = g.x_widths[i];
            for j in 0..nv {
                let row = g.index(i, j);
                if self.excised[row] {
                    *lu.at(row, row) = 1.0;
                    continue;
                }
                let v = g.v_nodes[j];
                let mut diag = inv_dt;
                if v > 0.0 {
                    diag += v / dx;
                    if i > 0 {
                        let col = g.index(i - 1, j);
                        if !self.excised[col] {
                            *lu.at(row, col) -= v / dx;
                        }
                    } else if self.opts.wall == WallKind::Inelastic {
                        let col = g.index(0, g.partner(j).expect("positive cells are paired"));
                        if !self.excised[col] {
                            *lu.at(row, col) -= v * inv_r2 / dx;
                        }
                    }
                } else if v < 0.0 {
                    if i > 0 || self.opts.wall == WallKind::Inelastic {
                        diag -= v / dx;
                    }
                    if i + 1 < nx {
                        let col = g.index(i + 1, j);
                        if !self.excised[col] {
                            *lu.at(row, col) += v / dx;
                        }
                    }
                }
                let (lower, upper) = self.diffusion_coefficients(j);
                diag += lower + upper;
                if j > 0 && !self.excised[row - 1] {
                    *lu.at(row, row - 1) -= lower;
                }
                if j + 1 < nv && !self.excised[row + 1] {
                    *lu.at(row, row + 1) -= upper;
                }
                *lu.at(row, row) += diag;
            }
        }
        lu
    }

    /// Advances one step; the corner ledger takes whatever mass the step removed
    /// from the grid apart from the outflow at `x_max`.
    pub fn advance(&self, state: &mut SolverState) -> Result<()> {
        match &self.implicit {
            Some(lu) => {
                let inv_dt = 1.0 / self.opts.dt;
                let mut rhs: Vec<f64> = state
                    .density
                    .iter()
                    .zip(&self.excised)
                    .map(|(p, &e)| if e { 0.0 } else { p * inv_dt })
                    .collect();
                lu.solve(&mut rhs);
                state.density = rhs;
                state.outflow += self.opts.dt * self.outflow_rate(&state.density);
            }
            None => {
                state.outflow += self.opts.dt * self.outflow_rate(&state.density);
                self.transport_step(&mut state.density);
                self.implicit_diffusion(&mut state.density);
            }
        }
        let after = self.grid.integrate(&state.density);
        state.m = state.initial_total - after - state.outflow;
        state.t += self.opts.dt;
        Ok(())
    }

    /// One explicit upwind transport step on its own, without diffusion.
    pub fn transport_step(&self, density: &mut [f64]) {
        let g = &self.grid;
        let (nx, nv) = (g.n_x(), g.n_v());
        let dt = self.opts.dt;
        let ghosts = apply_wall_bc(g, &density[..nv]);
        let old = density.to_vec();
        for i in 0..nx {
            let dx = g.x_widths[i];
            for (j, &ghost) in ghosts.iter().enumerate() {
                let idx = g.index(i, j);
                if self.excised[idx] {
                    continue;
                }
                let v = g.v_nodes[j];
                let value = |ii: usize| {
                    let k = g.index(ii, j);
                    if self.excised[k] {
                        0.0
                    } else {
                        old[k]
                    }
                };
                let flux_in;
                let flux_out;
                if v > 0.0 {
                    flux_out = v * old[idx];
                    flux_in = if i > 0 {
                        v * value(i - 1)
                    } else if self.opts.wall == WallKind::Inelastic {
                        let jm = g.partner(j).expect("positive cells are paired");
                        if self.excised[g.index(0, jm)] {
                            0.0
                        } else {
                            v * ghost
                        }
                    } else {
                        0.0
                    };
                } else if v < 0.0 {
                    flux_out = if i > 0 || self.opts.wall == WallKind::Inelastic {
                        -v * old[idx]
                    } else {
                        0.0
                    };
                    flux_in = if i + 1 < nx { -v * value(i + 1) } else { 0.0 };
                } else {
                    continue;
                }
                density[idx] = old[idx] + dt * (flux_in - flux_out) / dx;
            }
        }
    }

    fn implicit_diffusion(&self, density: &mut [f64]) {
        let g = &self.grid;
        let nv = g.n_v();
        let inv_dt = 1.0 / self.opts.dt;
        let mut lower = vec![0.0; nv];
        let mut diag = vec![0.0; nv];
        let mut upper = vec![0.0; nv];
        for (i, col) in density.chunks_mut(nv).enumerate() {
            for j in 0..nv {
                let row = g.index(i, j);
                if self.excised[row] {
                    lower[j] = 0.0;
                    upper[j] = 0.0;
                    diag[j] = 1.0;
                    col[j] = 0.0;
                    continue;
                }
                let (lo, up) = self.diffusion_coefficients(j);
                diag[j] = inv_dt + lo + up;
                lower[j] = if j > 0 && !self.excised[row - 1] {
                    -lo
                } else {
                    0.0
                };
                upper[j] = if j + 1 < nv && !self.excised[row + 1] {
                    -up
                } else {
                    0.0
                };
                col[j] *= inv_dt;
            }
            thomas(&lower, &mut diag, &upper, col);
        }
    }
}

/// Tridiagonal solve; `diag` is overwritten.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    for k in 1..n {
        let l = lower[k] / diag[k - 1];
        diag[k] -= l * upper[k - 1];
        rhs[k] -= l * rhs[k - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for k in (0..n - 1).rev() {
        rhs[k] = (rhs[k] - upper[k] * rhs[k + 1]) / diag[k];
    }
}

/// Least-squares amplitudes of `P ≈ a_α G_α + a_{-2/3} G_{-2/3}` near the corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginFit {
    pub a_alpha: f64,
    pub a_m23: f64,
    pub fit_radius: f64,
    /// `‖P - fit‖ / ‖P‖` over the fit cells.
    pub residual: f64,
    /// Standard errors of the two amplitudes from the misfit.
    pub stderr_alpha: f64,
    pub stderr_m23: f64,
    /// Condition number of the normalized two-column Gram matrix.
    pub condition: f64,
    pub points: usize,
    pub reliable: bool,
    /// Smallest `a_m23` distinguishable from fit noise: the larger of its
    /// standard error and half the gap between fits on the inner and outer
    /// halves of the band.
    pub noise_floor: f64,
}

/// Fit cells and basis values, computed once per grid and radius.
#[derive(Debug, Clone)]
pub struct OriginFitter {
    rho: f64,
    cells: Vec<usize>,
    inner: Vec<bool>,
    basis_alpha: Vec<f64>,
    basis_m23: Vec<f64>,
}

struct PairFit {
    a_alpha: f64,
    a_m23: f64,
    rss: f64,
    aa: f64,
    ab: f64,
    bb: f64,
}

fn pair_fit(rows: impl Iterator<Item = (f64, f64, f64)> + Clone) -> PairFit {
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b, y) in rows.clone() {
        aa += a * a;
        ab += a * b;
        bb += b * b;
        ay += a * y;
        by += b * y;
    }
    let det = aa * bb - ab * ab;
    let a_alpha = (bb * ay - ab * by) / det;
    let a_m23 = (aa * by - ab * ay) / det;
    let rss = rows
        .map(|(a, b, y)| (y - a_alpha * a - a_m23 * b).powi(2))
        .sum();
    PairFit {
        a_alpha,
        a_m23,
        rss,
        aa,
        ab,
        bb,
    }
}

impl OriginFitter {
    pub fn new(grid: &Grid, rho: f64, band: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(KfpError::config(
                "rho_fit",
                format!("must be positive, got {rho}"),
            ));
        }
        if !(band > 1.0) {
            return Err(KfpError::config(
                "fit_band",
                format!("must exceed 1, got {band}"),
            ));
        }
        let alpha = exponents::alpha_of_r(grid.r)?;
        let mut cells = Vec::new();
        let mut inner = Vec::new();
        let mut basis_alpha = Vec::new();
        let mut basis_m23 = Vec::new();
        for i in 0..grid.n_x() {
            let x = grid.x_nodes[i];
            if x > band * rho {
                break;
            }
            for j in 0..grid.n_v() {
                let v = grid.v_nodes[j];
                let s = x + v.abs().powi(3);
                if s < rho / band || s > rho * band {
                    continue;
                }
                let p = PhasePoint::new(x, v);
                cells.push(grid.index(i, j));
                inner.push(s <= rho);
                basis_alpha.push(profiles::g_gamma(alpha, p)?);
                basis_m23.push(profiles::g_gamma(exponents::TRIVIAL_ROOT, p)?);
            }
        }
        let inner_count = inner.iter().filter(|&&k| k).count();
        if cells.len() < 8 || inner_count < 3 || cells.len() - inner_count < 3 {
            return Err(KfpError::config(
                "rho_fit",
                format!(
                    "only {} cells near x + |v|³ = {rho}; the radius is not resolved",
                    cells.len()
                ),
            ));
        }
        Ok(OriginFitter {
            rho,
            cells,
            inner,
            basis_alpha,
            basis_m23,
        })
    }

    pub fn points(&self) -> usize {
        self.cells.len()
    }

    pub fn fit(&self, density: &[f64]) -> OriginFit {
        let rows = || {
            self.cells
                .iter()
                .zip(self.basis_alpha.iter().zip(&self.basis_m23))
                .map(|(&c, (&a, &b))| (a, b, density[c]))
        };
        let full = pair_fit(rows());
        let half = |inside: bool| {
            pair_fit(
                rows()
                    .zip(&self.inner)
                    .filter(move |(_, &k)| k == inside)
                    .map(|(row, _)| row),
            )
        };
        let window_gap = 0.5 * (half(true).a_m23 - half(false).a_m23).abs();
        let yy: f64 = self.cells.iter().map(|&c| density[c] * density[c]).sum();
        let n = self.cells.len();
        let det = full.aa * full.bb - full.ab * full.ab;
        let sigma2 = full.rss / (n - 2) as f64;
        let corr = full.ab / (full.aa * full.bb).sqrt();
        let condition = (1.0 + corr.abs()) / (1.0 - corr.abs());
        let residual = if yy > 0.0 {
            (full.rss / yy).sqrt()
        } else {
            1.0
        };
        let stderr_m23 = (sigma2 * full.aa / det).sqrt();
        OriginFit {
            a_alpha: full.a_alpha,
            a_m23: full.a_m23,
            fit_radius: self.rho,
            residual,
            stderr_alpha: (sigma2 * full.bb / det).sqrt(),
            stderr_m23,
            condition,
            points: n,
            reliable: residual <= FIT_UNRELIABLE,
            noise_floor: stderr_m23.max(window_gap),
        }
    }
}

/// Two-profile fit of `state` on the arc `x + |v|³ = rho`.
pub fn fit_origin(state: &SolverState, grid: &Grid, rho: f64) -> Result<OriginFit> {
    Ok(OriginFitter::new(grid, rho, DEFAULT_FIT_BAND)?.fit(&state.density))
}

/// Which boundary-condition residual a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticMode {
    /// Reports `|a_α|`.
    Trapping,
    /// Reports `|a_{-2/3}|`.
    Nontrapping,
    /// Reports `|a_α - μ_* m|`.
    Partial { mu_star: f64 },
    /// Reports `|a_{-2/3}|`; needs `r > r_c`.
    Supercritical,
}

impl DiagnosticMode {
    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticMode::Trapping => "trapping",
            DiagnosticMode::Nontrapping => "nontrapping",
            DiagnosticMode::Partial { .. } => "partial",
            DiagnosticMode::Supercritical => "supercritical",
        }
    }

    fn residual(&self, fit: &OriginFit, m: f64) -> f64 {
        match self {
            DiagnosticMode::Trapping => fit.a_alpha.abs(),
            DiagnosticMode::Nontrapping | DiagnosticMode::Supercritical => fit.a_m23.abs(),
            DiagnosticMode::Partial { mu_star } => (fit.a_alpha - mu_star * m).abs(),
        }
    }
}

fn default_mode() -> DiagnosticMode {
    DiagnosticMode::Trapping
}
fn default_x_max() -> f64 {
    6.0
}
fn default_v_max() -> f64 {
    6.0
}
fn default_n_x() -> usize {
    200
}
fn default_n_v() -> usize {
    100
}
fn default_dt() -> f64 {
    2e-3
}
fn default_t_end() -> f64 {
    1.0
}
fn default_rho_cut() -> f64 {
    1e-6
}
fn default_fit_band() -> f64 {
    DEFAULT_FIT_BAND
}
fn default_samples() -> usize {
    50
}

/// Configuration of a diagnostic run. Everything except `r` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub r: f64,
    #[serde(default = "default_mode")]
    pub mode: DiagnosticMode,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    #[serde(default = "default_n_v")]
    pub n_v: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Excision radius; zero runs without excision.
    #[serde(default = "default_rho_cut")]
    pub rho_cut: f64,
    /// Fit radius; defaults to `100 rho_cut`.
    #[serde(default)]
    pub rho_fit: Option<f64>,
    /// Ratio of the outer fit radius to `rho_fit`.
    #[serde(default = "default_fit_band")]
    pub fit_band: f64,
    /// Wall cell width; defaults to `rho_cut / 100`.
    #[serde(default)]
    pub x_first: Option<f64>,
    /// First velocity cell width; defaults to `rho_cut^{1/3} / 10`.
    #[serde(default)]
    pub v_first: Option<f64>,
    #[serde(default)]
    pub growth: Option<f64>,
    #[serde(default)]
    pub stepping: Stepping,
    #[serde(default)]
    pub initial: InitialData,
    /// Number of output samples after the initial one.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl SolveConfig {
    pub fn new(r: f64, mode: DiagnosticMode) -> Self {
        SolveConfig {
            r,
            mode,
            x_max: default_x_max(),
            v_max: default_v_max(),
            n_x: default_n_x(),
            n_v: default_n_v(),
            dt: default_dt(),
            t_end: default_t_end(),
            rho_cut: default_rho_cut(),
            rho_fit: None,
            fit_band: default_fit_band(),
            x_first: None,
            v_first: None,
            growth: None,
            stepping: Stepping::Implicit,
            initial: InitialData::default(),
            samples: default_samples(),
        }
    }

    /// Scale used for default resolutions when excision is off.
    fn corner_scale(&self) -> f64 {
        if self.rho_cut > 0.0 {
            self.rho_cut
        } else {
            self.rho_fit.map_or(default_rho_cut(), |f| f / 100.0)
        }
    }

    pub fn fit_radius(&self) -> f64 {
        self.rho_fit.unwrap_or(100.0 * self.corner_scale())
    }

    pub fn validate(&self) -> Result<()> {
        let rc = exponents::critical_r();
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(KfpError::config(
                "r",
                format!("restitution must lie in (0, 1], got {}", self.r),
            ));
        }
        match self.mode {
            DiagnosticMode::Supercritical if self.r <= rc => {
                return Err(KfpError::config(
                    "mode",
                    format!("supercritical mode needs r > r_c = {rc:.5}"),
                ));
            }
            DiagnosticMode::Trapping
            | DiagnosticMode::Nontrapping
            | DiagnosticMode::Partial { .. }
                if self.r >= rc =>
            {
                return Err(KfpError::config(
                    "mode",
                    format!("{} mode needs r < r_c = {rc:.5}", self.mode.name()),
                ));
            }
            DiagnosticMode::Partial { mu_star } if !(mu_star >= 0.0) => {
                return Err(KfpError::config("mu_star", "must be nonnegative"));
            }
            _ => {}
        }
        if self.mode != DiagnosticMode::Supercritical && !(self.rho_cut > 0.0) {
            return Err(KfpError::config(
                "rho_cut",
                "subcritical runs need a positive excision radius",
            ));
        }
        if !(self.t_end > 0.0) {
            return Err(KfpError::config("t_end", "must be positive"));
        }
        if self.samples == 0 {
            return Err(KfpError::config("samples", "must be at least 1"));
        }
        if !(self.fit_band > 1.0) {
            return Err(KfpError::config("fit_band", "must exceed 1"));
        }
        if self.rho_cut > 0.0 && self.fit_radius() < 2.0 * self.fit_band * self.rho_cut {
            return Err(KfpError::config(
                "rho_fit",
                "fit cells would overlap the excised corner",
            ));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        let scale = self.corner_scale();
        GridSpec {
            r: self.r,
            x_max: self.x_max,
            v_max: self.v_max,
            n_x: self.n_x,
            n_v: self.n_v,
            x_first: self.x_first.unwrap_or(scale / 100.0),
            v_first: self.v_first.unwrap_or(scale.cbrt() / 10.0),
            growth: self.growth.unwrap_or(DEFAULT_GROWTH),
        }
    }
}

/// One output row of a diagnostic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub t: f64,
    pub total_mass: f64,
    pub m: f64,
    pub a_alpha: f64,
    pub a_m23: f64,
    pub fit_residual: f64,
    pub mode_residual: f64,
    pub stderr_m23: f64,
    pub noise_floor: f64,
    /// `dm/dt` over the step that produced this sample.
    pub corner_flux: f64,
    pub ledger_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRun {
    pub config: SolveConfig,
    pub kappa: f64,
    pub alpha: f64,
    pub excised_cells: usize,
    pub fit_points: usize,
    pub samples: Vec<DiagnosticSample>,
}

/// Runs the solver under the wall law and reports the mode's diagnostic.
pub fn run_diagnostic(cfg: &SolveConfig) -> Result<DiagnosticRun> {
    cfg.validate()?;
    let grid = cfg.grid_spec().build()?;
    let solver = Solver::new(
        grid,
        SolverOptions {
            dt: cfg.dt,
            rho_cut: cfg.rho_cut,
            stepping: cfg.stepping,
            wall: WallKind::Inelastic,
        },
    )?;
    let fitter = OriginFitter::new(solver.grid(), cfg.fit_radius(), cfg.fit_band)?;
    let mut state = solver.initial_state(&cfg.initial)?;
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let every = (steps / cfg.samples).max(1);
    let sample = |state: &SolverState, corner_flux: f64| {
        let fit = fitter.fit(&state.density);
        DiagnosticSample {
            t: state.t,
            total_mass: state.total_mass(solver.grid()),
            m: state.m,
            a_alpha: fit.a_alpha,
            a_m23: fit.a_m23,
            fit_residual: fit.residual,
            mode_residual: cfg.mode.residual(&fit, state.m),
            stderr_m23: fit.stderr_m23,
            noise_floor: fit.noise_floor,
            corner_flux,
            ledger_gap: state.ledger_gap(solver.grid()),
        }
    };
    let mut samples = vec![sample(&state, 0.0)];
    for step in 1..=steps {
        let m_before = state.m;
        solver.advance(&mut state)?;
        if step % every == 0 || step == steps {
            samples.push(sample(&state, (state.m - m_before) / cfg.dt));
        }
    }
    Ok(DiagnosticRun {
        config: cfg.clone(),
        kappa: exponents::kappa(cfg.r)?,
        alpha: exponents::alpha_of_r(cfg.r)?,
        excised_cells: solver.excised_count(),
        fit_points: fitter.points(),
        samples,
    })
}

/// `(t, dM/dt, -κ a_{-2/3})` at the samples whose fit residual is below
/// `max_residual`. `dM/dt` is the corner loss over the sampled step, which is
/// exactly the flux of the implicit step's density, so both sides refer to the
/// same state; outflow at `x_max` is not counted.
pub fn mass_law_windows(run: &DiagnosticRun, max_residual: f64) -> Vec<(f64, f64, f64)> {
    run.samples
        .iter()
        .skip(1)
        .filter(|s| s.fit_residual < max_residual)
        .map(|s| (s.t, -s.corner_flux, -run.kappa * s.a_m23))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_rule() {
        let g = Grid::from_edges(0.5, vec![0.0, 1.0], vec![0.5, 1.5, 2.5]);
        assert_eq!(g.v_minus(), vec![1.0, 2.0]);
        assert_eq!(g.v_plus(), vec![0.5, 1.0]);
        let g = Grid::from_edges(1.0, vec![0.0, 1.0], vec![0.5, 1.5, 2.5]);
        assert_eq!(g.v_nodes(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn graded_grid_postconditions() {
        let g = build_grid(0.1, 4.0, 5.0, 64, 64).unwrap();
        assert_eq!(g.n_x(), 64);
        assert!(g.x_edges().windows(2).all(|w| w[1] > w[0]));
        assert!(g.v_nodes().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*g.x_edges().last().unwrap(), 4.0);
        for (u, p) in g.v_minus().iter().zip(g.v_plus()) {
            assert_eq!(p, 0.1 * u);
        }
        assert!(
            g.v_plus().last().unwrap() + 0.5 * g.v_widths().last().unwrap() >= 5.0 * (1.0 - 1e-9)
        );
        assert!(g.x_widths()[0] < 1e-6);
    }

    #[test]
    fn wall_ghosts() {
        let g = build_grid(0.5, 1.0, 1.0, 32, 32).unwrap();
        let nv = g.n_v();
        let col = vec![3.0; nv];
        let ghosts = apply_wall_bc(&g, &col);
        assert!(ghosts[g.zero_index() + 1..].iter().all(|&x| x == 12.0));
        let g = build_grid(1.0, 1.0, 1.0, 32, 32).unwrap();
        let col: Vec<f64> = (0..g.n_v()).map(|j| j as f64).collect();
        let ghosts = apply_wall_bc(&g, &col);
        for j in g.zero_index() + 1..g.n_v() {
            assert_eq!(ghosts[j], col[g.partner(j).unwrap()]);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(0.0, 1.0, 1.0, 64, 64).is_err());
        assert!(build_grid(0.5, 1.0, 1.0, 8, 64).is_err());
        assert!(Solver::new(
            GridSpec::uniform(1.0, 1.0, 1.0, 32, 32).build().unwrap(),
            SolverOptions {
                dt: 1.0,
                rho_cut: 0.0,
                stepping: Stepping::ExplicitTransport,
                wall: WallKind::Inelastic
            }
        )
        .is_err());
    }

    #[test]
    fn band_lu_solves() {
        let mut lu = BandLu::zeros(4, 1);
        for i in 0..4 {
            *lu.at(i, i) = 4.0;
            if i > 0 {
                *lu.at(i, i - 1) = -1.0;
            }
            if i < 3 {
                *lu.at(i, i + 1) = -1.0;
            }
        }
        lu.factor().unwrap();
        let mut b = vec![3.0, 2.0, 2.0, 3.0];
        lu.solve(&mut b);
        for x in b {
            assert!((x - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_fit_recovers_members() {
        let g = build_grid(0.1, 1.0, 2.0, 200, 100).unwrap();
        let alpha = exponents::alpha_of_r(0.1).unwrap();
        let mut a = vec![0.0; g.len()];
        let mut b = vec![0.0; g.len()];
        for i in 0..g.n_x() {
            if g.x_nodes()[i] > 1e-3 {
                break;
            }
            for j in 0..g.n_v() {
                let p = PhasePoint::new(g.x_nodes()[i], g.v_nodes()[j]);
                a[g.index(i, j)] = profiles::g_gamma(alpha, p).unwrap();
                b[g.index(i, j)] = profiles::g_gamma(-2.0 / 3.0, p).unwrap();
            }
        }
        let fitter = OriginFitter::new(&g, 1e-4, DEFAULT_FIT_BAND).unwrap();
        let fit = fitter.fit(&b);
        assert!(
            (fit.a_m23 - 1.0).abs() < 1e-8 && fit.a_alpha.abs() < 1e-8,
            "{fit:?}"
        );
        let mix: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 2.0 * p + 3.0 * q).collect();
        let fit = fitter.fit(&mix);
        assert!(
            (fit.a_alpha - 2.0).abs() < 1e-6 && (fit.a_m23 - 3.0).abs() < 1e-6,
            "{fit:?}"
        );
    }
}
