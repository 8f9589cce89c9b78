//! Large-N Schwinger-Dyson saddles of the replicated G-Sigma action.
//!
//! Fields live on the points of a [`ContourGrid`] and are stored as plain
//! matrices of values, without quadrature weights. With `W = diag(w)` the
//! discrete Dyson equation reads
//!
//! ```text
//! G = (A0 - K_mu - W Sigma W)^-1,   Sigma_pq = J^2 f_p f_q G_pq^(q-1)
//! ```
//!
//! where `A0` is the exact inverse of the free propagator `sgn_c / 2` on each
//! replica loop (a first-difference operator with antiperiodic closure) and
//! `K_mu` couples jump partners with strength `mu w`.

mod page;

pub use page::{
    critical_mu_scan, estimate_critical_mu, page_curve, BranchPoint, CriticalScanRow, PageCurve,
    PageCurveSettings,
};

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourGrid, Direction, Replica};
use crate::error::{Error, Result};
use crate::params::ModelParams;

type C = Complex64;

/// Antisymmetric bilocal field `F(u, u')` sampled on contour points.
#[derive(Debug, Clone)]
pub struct BilocalField {
    pub values: Mat<C>,
}

impl BilocalField {
    pub fn zeros(dim: usize) -> Self {
        Self { values: Mat::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, p: usize, q: usize) -> C {
        self.values[(p, q)]
    }

    /// `max |F + F^T|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.values[(i, j)] + self.values[(j, i)]).norm());
            }
        }
        worst
    }

    /// Frobenius-like size of the block between two index sets.
    pub fn block_max(&self, rows: &[usize], cols: &[usize]) -> f64 {
        let mut m = 0.0f64;
        for &r in rows {
            for &c in cols {
                m = m.max(self.values[(r, c)].norm());
            }
        }
        m
    }

    /// Writes the real and imaginary parts as two CSV matrices in one file.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, imaginary: bool) -> std::io::Result<()> {
        let n = self.dim();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| {
                    let z = self.values[(i, j)];
                    format!("{:.16e}", if imaginary { z.im } else { z.re })
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedClass {
    Diagonal,
    Wormhole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub mixing: f64,
    /// Give up early when this many iterations bring no progress; 0 disables.
    #[serde(default = "default_stall_window")]
    pub stall_window: usize,
}

fn default_stall_window() -> usize {
    300
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, mixing: 0.5, stall_window: default_stall_window() }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(Error::InvalidParams(format!("mixing must lie in (0, 1], got {}", self.mixing)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub g: BilocalField,
    pub sigma: BilocalField,
    /// `S_eff / N` on the replica count of the grid.
    pub action: C,
    pub seed_class: SeedClass,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Fixed-point residual after every iteration.
    pub history: Vec<f64>,
}

/// `sgn_c(p - q) / 2` within each replica loop, zero across loops.
pub fn free_propagator(grid: &ContourGrid) -> Mat<C> {
    let m = grid.len();
    Mat::from_fn(m, m, |p, q| C::new(0.5 * grid.loop_sign(p, q), 0.0))
}

/// Free propagator of the branch-swapped loops `(a+, b-)` and `(b+, a-)`.
///
/// Each swapped loop is the forward branch of one replica followed by the
/// backward branch of the other, so its Green's function pairs the two
/// replicas the way the long-time wormhole does. Fields on the forward
/// branch of replica b are sign-flipped to match the orientation of the
/// jump coupling.
pub fn swapped_propagator(grid: &ContourGrid) -> Mat<C> {
    let m = grid.len();
    if grid.replicas != 2 {
        return free_propagator(grid);
    }
    let l = grid.loop_len();
    let half = l / 2;
    // Position along the swapped loop and the loop id.
    let key = |p: usize| {
        let r = p / l;
        let local = p % l;
        if local < half {
            (r, local, if r == 1 { -1.0 } else { 1.0 })
        } else {
            (1 - r, local, 1.0)
        }
    };
    Mat::from_fn(m, m, |p, q| {
        let (lp, sp, gp) = key(p);
        let (lq, sq, gq) = key(q);
        if lp != lq || sp == sq {
            C::new(0.0, 0.0)
        } else if sp > sq {
            C::new(0.5 * gp * gq, 0.0)
        } else {
            C::new(-0.5 * gp * gq, 0.0)
        }
    })
}

/// Inverse of the free propagator, `A0 = (sgn_c / 2)^-1`, loop by loop.
pub fn free_kernel(grid: &ContourGrid) -> Mat<C> {
    let l = grid.loop_len();
    let one_loop = Mat::from_fn(l, l, |p, q| {
        C::new(
            match p.cmp(&q) {
                std::cmp::Ordering::Greater => 0.5,
                std::cmp::Ordering::Less => -0.5,
                std::cmp::Ordering::Equal => 0.0,
            },
            0.0,
        )
    });
    let inv = one_loop.partial_piv_lu().inverse();
    let m = grid.len();
    Mat::from_fn(m, m, |p, q| {
        if p / l == q / l {
            inv[(p % l, q % l)]
        } else {
            C::new(0.0, 0.0)
        }
    })
}

/// Orientation of the jump coupling `K_mu[p, partner(p)]` for `p` on a
/// forward branch of replica a (or of the single loop).
///
/// The single-loop sign is fixed by the conserved trace of the density
/// matrix. On two loops the pairing out of replica b carries the opposite
/// sign; this reproduces the exact free-fermion purity
/// `[(1 + e^(-4 mu t)) / 2]^N` (see the tests), while equal signs would give
/// a purely linear entropy.
const JUMP_SIGN: f64 = -1.0;

/// Jump coupling between equal-time partners on opposite branches.
pub fn jump_kernel(grid: &ContourGrid, params: &ModelParams) -> Mat<C> {
    let m = grid.len();
    let mut k = Mat::<C>::zeros(m, m);
    if params.mu == 0.0 {
        return k;
    }
    for p in &grid.points {
        if p.branch.direction != Direction::Forward {
            continue;
        }
        if let Some(q) = grid.partner(p.index) {
            let s = if p.branch.replica == Replica::A { JUMP_SIGN } else { -JUMP_SIGN };
            let v = C::new(s * params.mu * p.weight, 0.0);
            k[(p.index, q)] = v;
            k[(q, p.index)] = -v;
        }
    }
    k
}

/// The discrete inverse free kernel `A0 - K_mu`.
pub fn free_inverse(grid: &ContourGrid, params: &ModelParams) -> BilocalField {
    let a0 = free_kernel(grid);
    let k = jump_kernel(grid, params);
    BilocalField { values: &a0 - &k }
}

/// `Sigma_pq = J^2 f_p f_q G_pq^(q-1)`.
pub fn self_energy(g: &BilocalField, grid: &ContourGrid, params: &ModelParams) -> BilocalField {
    let f = grid.factors();
    let j2 = params.j * params.j;
    let e = params.q as i32 - 1;
    let m = g.dim();
    BilocalField {
        values: Mat::from_fn(m, m, |p, q| f[p] * f[q] * j2 * g.values[(p, q)].powi(e)),
    }
}

/// Inverse and `ln det` of a kernel.
///
/// On two loops every kernel met by the solver has the block form
/// `[[X, Y], [-Y, X]]` (replica exchange combined with `chi_b -> -chi_b`),
/// which the complex combinations `X + iY` and `X - iY` block-diagonalize.
fn invert(a: &Mat<C>, grid: &ContourGrid) -> (Mat<C>, C) {
    if grid.replicas == 2 {
        let l = grid.loop_len();
        let i = C::new(0.0, 1.0);
        let plus = Mat::from_fn(l, l, |r, c| a[(r, c)] + i * a[(r, c + l)]);
        let minus = Mat::from_fn(l, l, |r, c| a[(r, c)] - i * a[(r, c + l)]);
        let (ip, dp) = lu_inverse(&plus);
        let (im, dm) = lu_inverse(&minus);
        let g = Mat::from_fn(2 * l, 2 * l, |r, c| {
            let (br, bc) = (r % l, c % l);
            match (r < l, c < l) {
                (true, true) | (false, false) => 0.5 * (ip[(br, bc)] + im[(br, bc)]),
                (true, false) => -0.5 * i * (ip[(br, bc)] - im[(br, bc)]),
                (false, true) => 0.5 * i * (ip[(br, bc)] - im[(br, bc)]),
            }
        });
        (g, dp + dm)
    } else {
        lu_inverse(a)
    }
}

/// Inverse and complex `ln det` (phase only defined modulo pi).
pub fn lu_inverse(a: &Mat<C>) -> (Mat<C>, C) {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut logdet = C::new(0.0, 0.0);
    for i in 0..u.nrows() {
        logdet += u[(i, i)].ln();
    }
    (lu.inverse(), logdet)
}

/// One application of the Dyson map: the new G and its kernel determinant.
struct Step {
    target: Mat<C>,
    logdet: C,
}


fn dyson_step(
    g: &BilocalField,
    base: &Mat<C>,
    grid: &ContourGrid,
    params: &ModelParams,
    iteration: usize,
) -> Result<(Step, BilocalField)> {
    let sigma = self_energy(g, grid, params);
    let w = grid.weights();
    let m = grid.len();
    let a = Mat::from_fn(m, m, |p, q| base[(p, q)] - w[p] * w[q] * sigma.values[(p, q)]);
    let (target, logdet) = invert(&a, grid);
    if !logdet.re.is_finite() || target.as_ref().norm_max().is_nan() {
        return Err(Error::SingularKernel {
            iteration,
            detail: format!("ln|det| = {}", logdet.re),
        });
    }
    Ok((Step { target, logdet }, sigma))
}

fn max_diff(a: &Mat<C>, b: &Mat<C>) -> f64 {
    (a - b).as_ref().norm_max()
}

fn antisymmetrize(g: &mut Mat<C>) {
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)] = C::new(0.0, 0.0);
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] - g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = -v;
        }
    }
}

/// Seed Green's function for a saddle class.
pub fn seed(grid: &ContourGrid, class: SeedClass) -> BilocalField {
    BilocalField {
        values: match class {
            SeedClass::Diagonal => free_propagator(grid),
            SeedClass::Wormhole => swapped_propagator(grid),
        },
    }
}

/// Damped fixed-point iteration from the canonical seed of `class`.
pub fn solve_saddle(
    grid: &ContourGrid,
    params: &ModelParams,
    class: SeedClass,
    settings: &SolverSettings,
) -> Result<SaddleSolution> {
    solve_saddle_from(grid, params, class, seed(grid, class), settings)
}

/// Damped fixed-point iteration from an explicit starting field.
pub fn solve_saddle_from(
    grid: &ContourGrid,
    params: &ModelParams,
    class: SeedClass,
    start: BilocalField,
    settings: &SolverSettings,
) -> Result<SaddleSolution> {
    settings.validate()?;
    params.validate()?;
    if start.dim() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: start.dim() });
    }
    let base = free_inverse(grid, params).values;
    let mut g = start;
    let mut alpha = settings.mixing;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for it in 0..settings.max_iter {
        let (step, _) = dyson_step(&g, &base, grid, params, it)?;
        let res = max_diff(&step.target, &g.values);
        history.push(res);
        if res < settings.tol {
            g.values = step.target;
            antisymmetrize(&mut g.values);
            converged = true;
            break;
        }
        if stalled(&history, settings.stall_window) {
            break;
        }
        let k = history.len();
        if k >= 2 && res > history[k - 2] {
            alpha = (alpha * 0.5).max(1e-3);
        } else if k >= 6 && history[k - 6..].windows(2).all(|w| w[1] < w[0]) {
            alpha = (alpha * 1.2).min(settings.mixing);
        }
        let mut next = Mat::from_fn(g.dim(), g.dim(), |p, q| {
            (1.0 - alpha) * g.values[(p, q)] + alpha * step.target[(p, q)]
        });
        antisymmetrize(&mut next);
        g.values = next;
    }

    // Sigma and ln det are re-evaluated on the returned G so that the action
    // belongs to exactly this field.
    let iterations = history.len();
    let (step, sigma) = dyson_step(&g, &base, grid, params, iterations)?;
    let residual = if converged { history[iterations - 1] } else { max_diff(&step.target, &g.values) };
    let action = action_value(&g, &sigma, step.logdet, grid, params);
    Ok(SaddleSolution { g, sigma, action, seed_class: class, converged, iterations, residual, history })
}

/// No progress: the best residual of the last `window` iterations is not
/// clearly below the best one before them.
fn stalled(history: &[f64], window: usize) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let (before, recent) = history.split_at(history.len() - window);
    let best = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    best(recent) > 0.9 * best(before)
}

/// `ln det A0` of the free kernel, a constant of the grid.
fn free_logdet(grid: &ContourGrid) -> C {
    let l = grid.loop_len();
    let one_loop = Mat::from_fn(l, l, |p, q| {
        C::new(
            match p.cmp(&q) {
                std::cmp::Ordering::Greater => 0.5,
                std::cmp::Ordering::Less => -0.5,
                std::cmp::Ordering::Equal => 0.0,
            },
            0.0,
        )
    });
    // det(A0) = 1 / det(sgn/2) per loop.
    let (_, d) = lu_inverse(&one_loop);
    -d * grid.replicas as f64
}

fn action_value(
    g: &BilocalField,
    sigma: &BilocalField,
    logdet: C,
    grid: &ContourGrid,
    params: &ModelParams,
) -> C {
    let w = grid.weights();
    let f = grid.factors();
    let j2 = params.j * params.j;
    let qf = params.q as f64;
    let m = grid.len();
    let mut bulk = C::new(0.0, 0.0);
    for p in 0..m {
        for q in 0..m {
            let gpq = g.values[(p, q)];
            let ww = w[p] * w[q];
            if ww == 0.0 {
                continue;
            }
            bulk += ww * (sigma.values[(p, q)] * gpq - j2 / qf * f[p] * f[q] * gpq.powi(params.q as i32));
        }
    }
    let c_mu = grid.replicas as f64;
    -0.5 * (logdet - free_logdet(grid)) + 0.5 * bulk + C::new(c_mu * params.mu * grid.t, 0.0)
}

/// `S_eff / N` evaluated on a solution (recomputed from its G).
pub fn action(sol: &SaddleSolution, grid: &ContourGrid, params: &ModelParams) -> Result<C> {
    if sol.g.dim() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: sol.g.dim() });
    }
    let base = free_inverse(grid, params).values;
    let (step, sigma) = dyson_step(&sol.g, &base, grid, params, sol.iterations)?;
    Ok(action_value(&sol.g, &sigma, step.logdet, grid, params))
}

/// Inter-replica block of G (rows on replica a, columns on replica b).
pub fn inter_replica_max(g: &BilocalField, grid: &ContourGrid) -> f64 {
    if grid.replicas != 2 {
        return 0.0;
    }
    let l = grid.loop_len();
    let a: Vec<usize> = (0..l).collect();
    let b: Vec<usize> = (l..2 * l).collect();
    g.block_max(&a, &b)
}
