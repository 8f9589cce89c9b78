//! Matrix-free Lanczos routines on state vectors.

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SparseHamiltonian;
use crate::error::{Error, Result};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C], a: C, x: &[C]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Orthonormal Lanczos basis and tridiagonal coefficients.
struct Lanczos {
    basis: Vec<Vec<C>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Norm of the residual left after the last step.
    tail: f64,
}

fn lanczos(h: &SparseHamiltonian, v0: &[C], m: usize) -> Lanczos {
    let n0 = norm(v0);
    let mut basis = vec![v0.iter().map(|x| x / n0).collect::<Vec<_>>()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![ZERO; v0.len()];
    let mut tail = 0.0;
    for k in 0..m {
        h.apply_into(&basis[k], &mut w);
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(&mut w, -c, b);
            }
        }
        let nb = norm(&w);
        tail = nb;
        if k + 1 == m || nb < 1e-14 {
            break;
        }
        beta.push(nb);
        basis.push(w.iter().map(|x| x / nb).collect());
    }
    Lanczos { basis, alpha, beta, tail }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<C>)> {
    let m = alpha.len();
    let mut t = Mat::<C>::zeros(m, m);
    for k in 0..m {
        t[(k, k)] = C::new(alpha[k], 0.0);
        if k + 1 < m {
            t[(k, k + 1)] = C::new(beta[k], 0.0);
            t[(k + 1, k)] = C::new(beta[k], 0.0);
        }
    }
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("tridiagonal eigensolver failed: {e:?}")))?;
    Ok(((0..m).map(|k| eig.S()[k].re).collect(), eig.U().to_owned()))
}

/// `exp(-i H tau) v` to absolute accuracy `tol * |v|`.
pub fn expm_apply(h: &SparseHamiltonian, v: &[C], tau: f64, tol: f64) -> Result<Vec<C>> {
    const M: usize = 40;
    let nv = norm(v);
    if nv == 0.0 || tau == 0.0 {
        return Ok(v.to_vec());
    }
    let lz = lanczos(h, v, M.min(v.len()));
    let m = lz.alpha.len();
    let (e, u) = tridiagonal_eigen(&lz.alpha, &lz.beta)?;
    // c = exp(-i T tau) e_1
    let mut c = vec![ZERO; m];
    for k in 0..m {
        let w = C::from_polar(1.0, -e[k] * tau) * u[(0, k)].conj();
        for i in 0..m {
            c[i] += u[(i, k)] * w;
        }
    }
    let err = lz.tail * c[m - 1].norm();
    if err > tol && m == M {
        let half = expm_apply(h, v, 0.5 * tau, 0.5 * tol)?;
        return expm_apply(h, &half, 0.5 * tau, 0.5 * tol);
    }
    let mut out = vec![ZERO; v.len()];
    for (k, b) in lz.basis.iter().take(m).enumerate() {
        axpy(&mut out, c[k] * nv, b);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Orthonormal basis of the ground space, one vector per parity sector hit.
    pub vectors: Vec<Vec<C>>,
    pub degeneracy: usize,
}

fn sector_ground(h: &SparseHamiltonian, parity: u32, tol: f64) -> Result<(f64, Vec<C>)> {
    let dim = h.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + parity as u64);
    let mut v: Vec<C> = (0..dim)
        .map(|s| {
            if (s as u32).count_ones() % 2 == parity {
                C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            } else {
                ZERO
            }
        })
        .collect();
    let m = 120.min(dim / 2).max(2);
    let mut energy = f64::NAN;
    for _restart in 0..50 {
        let lz = lanczos(h, &v, m);
        let (e, u) = tridiagonal_eigen(&lz.alpha, &lz.beta)?;
        let mut g = vec![ZERO; dim];
        for (k, b) in lz.basis.iter().take(lz.alpha.len()).enumerate() {
            axpy(&mut g, u[(k, 0)], b);
        }
        let ng = norm(&g);
        g.iter_mut().for_each(|x| *x /= ng);
        let hg = h.apply(&g);
        let mut r = hg.clone();
        axpy(&mut r, C::new(-e[0], 0.0), &g);
        energy = e[0];
        v = g;
        if norm(&r) < tol * (1.0 + e[0].abs()) {
            return Ok((energy, v));
        }
    }
    Err(Error::Numerical(format!("Lanczos ground state did not converge (E ~ {energy})")))
}

/// Ground space by Lanczos in each parity sector.
pub fn ground_state(h: &SparseHamiltonian, tol: f64) -> Result<GroundState> {
    let (e0, v0) = sector_ground(h, 0, tol)?;
    let (e1, v1) = sector_ground(h, 1, tol)?;
    let window = super::spectrum::DEGENERACY_TOL * (1.0 + e0.abs().max(e1.abs()));
    let (energy, vectors) = if (e0 - e1).abs() <= window {
        (e0.min(e1), vec![v0, v1])
    } else if e0 < e1 {
        (e0, vec![v0])
    } else {
        (e1, vec![v1])
    };
    Ok(GroundState { energy, degeneracy: vectors.len(), vectors })
}
