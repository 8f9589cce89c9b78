//! Parity-blocked dense spectra and operators in the energy eigenbasis.

use faer::{Mat, Side};
use num_complex::Complex64;

use super::{OperatorMatrix, PauliString, SparseHamiltonian, DENSE_MAX_N};
use crate::error::{Error, Result};

type C = Complex64;

fn parity(s: usize) -> usize {
    (s.count_ones() % 2) as usize
}

/// Eigendecomposition of `H` within the even (0) and odd (1) fermion-parity
/// sectors. `vectors[p]` has columns indexed by eigenvalue and rows by the
/// basis states `states[p]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub dim: usize,
    pub states: [Vec<usize>; 2],
    pub energies: [Vec<f64>; 2],
    pub vectors: [Mat<C>; 2],
}

/// Operator of definite parity in the eigenbasis of a [`Spectrum`].
///
/// Even operators store the (even, even) and (odd, odd) blocks, odd ones the
/// (even, odd) and (odd, even) blocks.
#[derive(Debug, Clone)]
pub struct BlockOp {
    pub odd: bool,
    pub blocks: [Mat<C>; 2],
}

impl BlockOp {
    pub fn identity(half: usize) -> Self {
        Self { odd: false, blocks: [Mat::identity(half, half), Mat::identity(half, half)] }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let [a0, a1] = &self.blocks;
        let [b0, b1] = &rhs.blocks;
        let blocks = match (self.odd, rhs.odd) {
            (false, false) => [a0 * b0, a1 * b1],
            (false, true) => [a0 * b0, a1 * b1],
            (true, false) => [a0 * b1, a1 * b0],
            (true, true) => [a0 * b1, a1 * b0],
        };
        Self { odd: self.odd != rhs.odd, blocks }
    }

    pub fn trace(&self) -> C {
        if self.odd {
            return C::new(0.0, 0.0);
        }
        let mut s = C::new(0.0, 0.0);
        for b in &self.blocks {
            for i in 0..b.nrows() {
                s += b[(i, i)];
            }
        }
        s
    }

    /// Scales row `i` of the block starting in sector `p` by `left[p][i]` and
    /// column `j` by `right[p'][j]`.
    pub fn scale(&mut self, left: &[Vec<C>; 2], right: &[Vec<C>; 2]) {
        let odd = self.odd as usize;
        for (p, b) in self.blocks.iter_mut().enumerate() {
            let l = &left[p];
            let r = &right[p ^ odd];
            for j in 0..b.ncols() {
                for i in 0..b.nrows() {
                    b[(i, j)] *= l[i] * r[j];
                }
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        let [a0, a1] = &self.blocks;
        let blocks = if self.odd {
            [a1.adjoint().to_owned(), a0.adjoint().to_owned()]
        } else {
            [a0.adjoint().to_owned(), a1.adjoint().to_owned()]
        };
        Self { odd: self.odd, blocks }
    }

    /// `Tr[self * rhs]`.
    pub fn trace_product(&self, rhs: &Self) -> C {
        if self.odd != rhs.odd {
            return C::new(0.0, 0.0);
        }
        let pairs: [(usize, usize); 2] = if self.odd { [(0, 1), (1, 0)] } else { [(0, 0), (1, 1)] };
        let mut s = C::new(0.0, 0.0);
        for (p, r) in pairs {
            let a = &self.blocks[p];
            let b = &rhs.blocks[r];
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    s += a[(i, j)] * b[(j, i)];
                }
            }
        }
        s
    }
}

impl Spectrum {
    pub fn new(h: &SparseHamiltonian) -> Result<Self> {
        if h.n > DENSE_MAX_N {
            return Err(Error::TooLarge(format!("dense spectrum needs N <= {DENSE_MAX_N}, got {}", h.n)));
        }
        let dim = h.dim;
        let mut states: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut pos = vec![0usize; dim];
        for s in 0..dim {
            let p = parity(s);
            pos[s] = states[p].len();
            states[p].push(s);
        }
        let mut blocks = [Mat::<C>::zeros(dim / 2, dim / 2), Mat::<C>::zeros(dim / 2, dim / 2)];
        for term in &h.terms {
            for s in 0..dim {
                let (t, a) = term.act(s);
                debug_assert_eq!(parity(t), parity(s));
                blocks[parity(s)][(pos[t], pos[s])] += a;
            }
        }
        let mut energies: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut vectors = [Mat::<C>::zeros(0, 0), Mat::<C>::zeros(0, 0)];
        for p in 0..2 {
            let eig = blocks[p]
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            energies[p] = (0..dim / 2).map(|k| eig.S()[k].re).collect();
            vectors[p] = eig.U().to_owned();
        }
        Ok(Self { dim, states, energies, vectors })
    }

    pub fn half(&self) -> usize {
        self.dim / 2
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues within `tol` of the ground energy.
    pub fn ground_degeneracy(&self, tol: f64) -> usize {
        let e0 = self.ground_energy();
        self.energies.iter().flatten().filter(|&&e| e - e0 <= tol).count()
    }

    /// A parity-odd string (a Majorana) in the eigenbasis.
    pub fn transform_odd(&self, p: &PauliString) -> BlockOp {
        let half = self.half();
        let mut blocks = [Mat::<C>::zeros(half, half), Mat::<C>::zeros(half, half)];
        for (src, b) in [(1usize, 0usize), (0, 1)] {
            // column k of (P V_src), landing in sector b
            let v = &self.vectors[src];
            let mut pv = Mat::<C>::zeros(half, half);
            let mut pos = vec![0usize; self.dim];
            for (i, &s) in self.states[b].iter().enumerate() {
                pos[s] = i;
            }
            for (i, &s) in self.states[src].iter().enumerate() {
                let (t, a) = p.act(s);
                let row = pos[t];
                for k in 0..half {
                    pv[(row, k)] += a * v[(i, k)];
                }
            }
            blocks[b] = self.vectors[b].adjoint() * &pv;
        }
        BlockOp { odd: true, blocks }
    }

    /// `exp(-i H s)` and `exp(-x H)` style diagonal factors per sector.
    pub fn phases(&self, f: impl Fn(f64) -> C) -> [Vec<C>; 2] {
        [self.energies[0].iter().map(|&e| f(e)).collect(), self.energies[1].iter().map(|&e| f(e)).collect()]
    }

    /// Dense matrix `sum_k f(E_k) |k><k|` in the computational basis.
    pub fn function(&self, f: impl Fn(f64) -> C) -> Mat<C> {
        let mut out = Mat::<C>::zeros(self.dim, self.dim);
        let half = self.half();
        for p in 0..2 {
            let v = &self.vectors[p];
            let mut vf = v.clone();
            for k in 0..half {
                let c = f(self.energies[p][k]);
                for i in 0..half {
                    vf[(i, k)] *= c;
                }
            }
            let block = &vf * v.adjoint();
            for (i, &s) in self.states[p].iter().enumerate() {
                for (j, &t) in self.states[p].iter().enumerate() {
                    out[(s, t)] = block[(i, j)];
                }
            }
        }
        out
    }
}

/// Real- and imaginary-time factors of one Hamiltonian.
#[derive(Debug, Clone)]
pub enum Propagators {
    Dense {
        u_plus: OperatorMatrix,
        u_minus: OperatorMatrix,
        /// `exp(-beta H / 2)`, or the ground-space projector at infinite beta.
        k_beta: OperatorMatrix,
        /// Ground-space dimension when `k_beta` is a projector.
        degeneracy: Option<usize>,
    },
    /// Beyond the dense ceiling: steps are applied with Krylov exponentials.
    Vector {
        h: SparseHamiltonian,
        dt: f64,
        ground: Option<super::GroundState>,
    },
}

/// Relative energy window that counts as degenerate with the ground state.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn propagators(h: &SparseHamiltonian, dt: f64, beta: f64) -> Result<Propagators> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParams(format!("beta must be >= 0, got {beta}")));
    }
    if h.n > DENSE_MAX_N {
        let ground = if beta.is_infinite() { Some(super::ground_state(h, 1e-10)?) } else { None };
        if beta.is_finite() && beta > 0.0 {
            return Err(Error::Unsupported("finite beta > 0 requires the dense path".into()));
        }
        return Ok(Propagators::Vector { h: h.clone(), dt, ground });
    }
    let spec = Spectrum::new(h)?;
    let u_plus = spec.function(|e| C::from_polar(1.0, -e * dt));
    let u_minus = spec.function(|e| C::from_polar(1.0, e * dt));
    let (k_beta, degeneracy) = if beta.is_infinite() {
        let e0 = spec.ground_energy();
        let tol = DEGENERACY_TOL * (1.0 + e0.abs());
        let d = spec.ground_degeneracy(tol);
        (spec.function(|e| if e - e0 <= tol { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) }), Some(d))
    } else {
        (spec.function(|e| C::new((-0.5 * beta * e).exp(), 0.0)), None)
    };
    Ok(Propagators::Dense {
        u_plus: OperatorMatrix::new(u_plus, false),
        u_minus: OperatorMatrix::new(u_minus, false),
        k_beta: OperatorMatrix::new(k_beta, true),
        degeneracy,
    })
}
