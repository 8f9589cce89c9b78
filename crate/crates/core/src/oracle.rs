//! Exact Lindblad evolution of the doubled system at tiny N.
//!
//! The `2N` Majoranas of the left and right copies are Jordan-Wigner strings
//! on `N` qubits: left ones on the low `N/2` qubits, right ones on the high
//! qubits carrying the left parity string. With `H` acting on the low qubits,
//! `H_L = 1 (x) H` and `H_R = (-1)^(q/2) H (x) 1`; the sign makes
//! `H_R |I> = H_L |I>` for the reference state `chi_L |I> = -i chi_R |I>`.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorana::{build_hamiltonian, majorana_strings, CouplingTensor, OperatorMatrix, PauliString};
use crate::params::ModelParams;

type C = Complex64;

/// Largest N evolved exactly.
pub const ORACLE_MAX_N: usize = 8;

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub dim: usize,
    pub values: Mat<C>,
    pub normalized: bool,
}

impl DensityMatrix {
    pub fn trace(&self) -> C {
        (0..self.dim).map(|i| self.values[(i, i)]).sum()
    }

    /// `Tr rho^2 / (Tr rho)^2`.
    pub fn purity(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.dim {
            for i in 0..self.dim {
                // rho Hermitian: Tr rho^2 = sum |rho_ij|^2
                s += self.values[(i, j)].norm_sqr();
            }
        }
        s / self.trace().norm_sqr()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dim {
            for i in 0..=j {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = self
            .values
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        Ok((0..self.dim).map(|k| eig.S()[k].re).fold(f64::INFINITY, f64::min))
    }

    /// Reduced density matrix of the left copy (low qubits).
    pub fn reduce_left(&self, half_dim: usize) -> Mat<C> {
        let other = self.dim / half_dim;
        Mat::from_fn(half_dim, half_dim, |a, b| {
            (0..other).map(|r| self.values[(a + half_dim * r, b + half_dim * r)]).sum()
        })
    }
}

/// Left and right Majoranas of the doubled system.
pub fn doubled_majoranas(n: usize) -> Result<(Vec<PauliString>, Vec<PauliString>)> {
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge(format!(
            "exact evolution needs N <= {ORACLE_MAX_N}, got {n}; use the trajectory estimator"
        )));
    }
    let mut all = majorana_strings(2 * n)?;
    let right = all.split_off(n);
    Ok((all, right))
}

fn apply(p: &PauliString, v: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); v.len()];
    for (s, &a) in v.iter().enumerate() {
        let (t, c) = p.act(s);
        out[t] += c * a;
    }
    out
}

/// The reference state with `chi_L,i |I> = -i chi_R,i |I>`, normalized.
pub fn identity_state(n: usize) -> Result<Vec<C>> {
    let (left, right) = doubled_majoranas(n)?;
    let dim = 1usize << n;
    // |I> is the joint +1 eigenvector of 2i chi_R chi_L
    let projectors: Vec<PauliString> = left
        .iter()
        .zip(&right)
        .map(|(l, r)| {
            let mut z = r.mul(l);
            z.phase = (z.phase + 1) % 4;
            z.scale *= 2.0;
            z
        })
        .collect();
    for s in 0..dim {
        let mut v = vec![C::new(0.0, 0.0); dim];
        v[s] = C::new(1.0, 0.0);
        for z in &projectors {
            let zv = apply(z, &v);
            for (a, b) in v.iter_mut().zip(zv) {
                *a = 0.5 * (*a + b);
            }
        }
        let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        for (l, r) in left.iter().zip(&right) {
            let lv = apply(l, &v);
            let rv = apply(r, &v);
            let res: f64 = lv.iter().zip(&rv).map(|(a, b)| (a + C::new(0.0, 1.0) * b).norm_sqr()).sum();
            if res.sqrt() > 1e-12 {
                return Err(Error::Numerical(format!("constraint residual {} for |I>", res.sqrt())));
            }
        }
        return Ok(v);
    }
    Err(Error::Numerical("no state satisfies the |I> constraints".into()))
}

/// `(H_L, H_R)` on the doubled space from a single-side Hamiltonian.
pub fn doubled_hamiltonians(h: &OperatorMatrix, q: usize) -> (Mat<C>, Mat<C>) {
    let d = h.dim;
    let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let hv = &h.values;
    let hl = Mat::from_fn(d * d, d * d, |i, j| if i / d == j / d { hv[(i % d, j % d)] } else { C::new(0.0, 0.0) });
    let hr = Mat::from_fn(d * d, d * d, |i, j| {
        if i % d == j % d {
            hv[(i / d, j / d)] * sign
        } else {
            C::new(0.0, 0.0)
        }
    });
    (hl, hr)
}

/// `exp(-beta (H_L + H_R) / 4) |I>`, normalized, as a pure density matrix.
///
/// At infinite beta the state is projected onto the lowest level of
/// `H_L + H_R` that `|I>` overlaps.
pub fn build_tfd(h: &OperatorMatrix, q: usize, beta: f64) -> Result<DensityMatrix> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParams(format!("beta must be >= 0, got {beta}")));
    }
    let d = h.dim;
    let n = 2 * d.trailing_zeros() as usize;
    let id = identity_state(n)?;
    let (hl, hr) = doubled_hamiltonians(h, q);
    let hs = &hl + &hr;
    let eig = hs
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let u = eig.U();
    let dim = d * d;
    let energies: Vec<f64> = (0..dim).map(|k| eig.S()[k].re).collect();
    let overlaps: Vec<C> = (0..dim).map(|k| (0..dim).map(|i| u[(i, k)].conj() * id[i]).sum()).collect();
    let e_min = (0..dim)
        .filter(|&k| overlaps[k].norm() > 1e-10)
        .map(|k| energies[k])
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + e_min.abs());
    let weight = |e: f64| -> f64 {
        if beta.is_infinite() {
            if e - e_min <= tol {
                1.0
            } else {
                0.0
            }
        } else {
            (-0.25 * beta * (e - e_min)).exp()
        }
    };
    let mut psi = vec![C::new(0.0, 0.0); dim];
    for k in 0..dim {
        let c = overlaps[k] * weight(energies[k]);
        for i in 0..dim {
            psi[i] += u[(i, k)] * c;
        }
    }
    let nrm = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|x| *x /= nrm);
    let values = Mat::from_fn(dim, dim, |i, j| psi[i] * psi[j].conj());
    Ok(DensityMatrix { dim, values, normalized: true })
}

/// Generator `-i[H_S, .] + mu sum_k chi_k . chi_k - mu N`.
#[derive(Debug, Clone)]
pub struct LindbladSystem {
    pub h_s: Mat<C>,
    pub jumps: Vec<PauliString>,
    pub mu: f64,
    /// Upper bound on the generator norm.
    bound: f64,
}

impl LindbladSystem {
    pub fn new(h: &OperatorMatrix, q: usize, mu: f64) -> Result<Self> {
        let n = 2 * h.dim.trailing_zeros() as usize;
        let (left, right) = doubled_majoranas(n)?;
        let (hl, hr) = doubled_hamiltonians(h, q);
        let h_s = &hl + &hr;
        let mut jumps = left;
        jumps.extend(right);
        let h_norm = h_s.norm_l2();
        Ok(Self { bound: 2.0 * h_norm + 2.0 * mu * n as f64, h_s, jumps, mu })
    }

    fn generator(&self, rho: &Mat<C>) -> Mat<C> {
        let dim = rho.nrows();
        let hr = &self.h_s * rho;
        let rh = rho * &self.h_s;
        let mut out = Mat::from_fn(dim, dim, |i, j| C::new(0.0, -1.0) * (hr[(i, j)] - rh[(i, j)]));
        if self.mu > 0.0 {
            // mu chi rho chi with chi = chi^dagger a phased permutation
            for p in &self.jumps {
                let act: Vec<(usize, C)> = (0..dim).map(|s| p.act(s)).collect();
                for (j, &(tj, aj)) in act.iter().enumerate() {
                    let cj = self.mu * aj.conj();
                    for (i, &(ti, ai)) in act.iter().enumerate() {
                        out[(ti, tj)] += ai * rho[(i, j)] * cj;
                    }
                }
            }
            let n_total = self.jumps.len() as f64;
            for j in 0..dim {
                for i in 0..dim {
                    out[(i, j)] -= 0.5 * self.mu * n_total * rho[(i, j)];
                }
            }
        }
        out
    }
}

/// Exact exponential of the generator over `dt`, by Taylor series on
/// substeps with `h |L| <= 1`.
pub fn lindblad_step(rho: &DensityMatrix, sys: &LindbladSystem, dt: f64) -> Result<DensityMatrix> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidParams(format!("dt must be >= 0, got {dt}")));
    }
    let n_sub = (dt * sys.bound).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;
    let mut cur = rho.values.clone();
    for _ in 0..n_sub {
        let scale = cur.norm_max();
        let mut term = cur.clone();
        let mut next = cur.clone();
        for k in 1..60 {
            let g = sys.generator(&term);
            let f = h / k as f64;
            term = Mat::from_fn(rho.dim, rho.dim, |i, j| g[(i, j)] * f);
            next = &next + &term;
            if term.norm_max() < 1e-17 * scale {
                break;
            }
        }
        cur = next;
    }
    let out = DensityMatrix { dim: rho.dim, values: cur, normalized: rho.normalized };
    let drift = (out.trace() - rho.trace()).norm();
    if drift > 1e-10 * (1.0 + dt) {
        return Err(Error::Numerical(format!("trace drifted by {drift:e}")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCurve {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub coupling_seeds: Vec<u64>,
    /// Annealed purity.
    pub gamma: Vec<f64>,
    /// `-ln gamma`.
    pub entropy: Vec<f64>,
    pub per_seed: Vec<Vec<f64>>,
}

fn check_state(rho: &DensityMatrix, t: f64) -> Result<()> {
    let herm = rho.hermiticity_error();
    if herm > 1e-12 {
        return Err(Error::Numerical(format!("density matrix non-Hermitian by {herm:e} at t = {t}")));
    }
    let lam = rho.min_eigenvalue()?;
    if lam < -1e-10 {
        return Err(Error::Numerical(format!("negative eigenvalue {lam:e} at t = {t}")));
    }
    Ok(())
}

/// Purity along one realization.
pub fn purity_curve(ct: &CouplingTensor, t_list: &[f64]) -> Result<Vec<f64>> {
    let p = &ct.params;
    let h = build_hamiltonian(ct)?;
    let sys = LindbladSystem::new(&h, p.q, p.mu)?;
    let mut rho = build_tfd(&h, p.q, p.beta)?;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        rho = lindblad_step(&rho, &sys, t - now)?;
        // restore exact Hermiticity lost to rounding
        let v = &rho.values;
        rho.values = Mat::from_fn(rho.dim, rho.dim, |i, j| 0.5 * (v[(i, j)] + v[(j, i)].conj()));
        check_state(&rho, t)?;
        now = t;
        out.push(rho.purity());
    }
    Ok(out)
}

/// Annealed exact purity over the given coupling seeds.
pub fn exact_purity_curve(params: &ModelParams, t_list: &[f64], coupling_seeds: &[u64]) -> Result<OracleCurve> {
    params.validate()?;
    if params.n > ORACLE_MAX_N {
        return Err(Error::TooLarge(format!(
            "exact evolution needs N <= {ORACLE_MAX_N}, got {}; use the trajectory estimator",
            params.n
        )));
    }
    if coupling_seeds.is_empty() {
        return Err(Error::InvalidParams("at least one coupling seed is required".into()));
    }
    if t_list.windows(2).any(|w| w[1] < w[0]) || t_list.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParams("t_list must be non-negative and ascending".into()));
    }
    let per_seed: Vec<Vec<f64>> = coupling_seeds
        .par_iter()
        .map(|&s| purity_curve(&CouplingTensor::sample(params, s)?, t_list))
        .collect::<Result<_>>()?;
    let nr = per_seed.len() as f64;
    let gamma: Vec<f64> = (0..t_list.len()).map(|k| per_seed.iter().map(|g| g[k]).sum::<f64>() / nr).collect();
    Ok(OracleCurve {
        params: *params,
        times: t_list.to_vec(),
        coupling_seeds: coupling_seeds.to_vec(),
        entropy: gamma.iter().map(|g| -g.ln()).collect(),
        gamma,
        per_seed,
    })
}
