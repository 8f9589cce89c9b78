//! Finite-N Majorana operators, SYK couplings and Hamiltonians.
//!
//! Majoranas are Jordan-Wigner strings on `N/2` qubits,
//! `chi_{2k} = Z_{<k} X_k / sqrt 2` and `chi_{2k+1} = Z_{<k} Y_k / sqrt 2`.
//! Every product of them is a phased permutation of basis states and is kept
//! symbolically as a [`PauliString`]; dense matrices are only formed on
//! request. Basis state `s` has qubit `k` in bit `k`.

mod krylov;
mod spectrum;

pub use krylov::{expm_apply, ground_state, GroundState};
pub use spectrum::{propagators, BlockOp, Propagators, Spectrum, DEGENERACY_TOL};

use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

type C = Complex64;

/// Largest N handled with dense matrices.
pub const DENSE_MAX_N: usize = 20;
/// Largest N handled at all (state vectors of `2^(N/2)` amplitudes).
pub const VECTOR_MAX_N: usize = 32;

/// `scale * i^phase * X^x Z^z`, acting as `|s> -> scale i^phase (-1)^{|s & z|} |s ^ x>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
    pub phase: u8,
    pub scale: f64,
}

fn i_pow(k: u8) -> C {
    match k % 4 {
        0 => C::new(1.0, 0.0),
        1 => C::new(0.0, 1.0),
        2 => C::new(-1.0, 0.0),
        _ => C::new(0.0, -1.0),
    }
}

impl PauliString {
    pub fn identity() -> Self {
        Self { x: 0, z: 0, phase: 0, scale: 1.0 }
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        // Z^z1 X^x2 = (-1)^{|z1 & x2|} X^x2 Z^z1
        let swap = (self.z & other.x).count_ones() as u8 % 2;
        Self {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
            phase: (self.phase + other.phase + 2 * swap) % 4,
            scale: self.scale * other.scale,
        }
    }

    pub fn coefficient(&self) -> C {
        i_pow(self.phase) * self.scale
    }

    /// Image of basis state `s`: target index and amplitude.
    #[inline]
    pub fn act(&self, s: usize) -> (usize, C) {
        let sign = if (s as u64 & self.z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        ((s as u64 ^ self.x) as usize, self.coefficient() * sign)
    }

    pub fn to_dense(&self, dim: usize) -> Mat<C> {
        let mut m = Mat::<C>::zeros(dim, dim);
        for s in 0..dim {
            let (t, a) = self.act(s);
            m[(t, s)] += a;
        }
        m
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParams(format!("N must be even and >= 2, got {n}")));
    }
    if n > VECTOR_MAX_N {
        return Err(Error::TooLarge(format!("N = {n} exceeds the ceiling {VECTOR_MAX_N}")));
    }
    Ok(())
}

/// The `N` Majorana strings.
pub fn majorana_strings(n: usize) -> Result<Vec<PauliString>> {
    check_n(n)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n);
    for k in 0..n / 2 {
        let below = (1u64 << k) - 1;
        let bit = 1u64 << k;
        out.push(PauliString { x: bit, z: below, phase: 0, scale: r });
        // Y = i X Z
        out.push(PauliString { x: bit, z: below | bit, phase: 1, scale: r });
    }
    Ok(out)
}

/// Dense operator with a Hermiticity flag.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub dim: usize,
    pub values: Mat<C>,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(values: Mat<C>, hermitian: bool) -> Self {
        Self { dim: values.nrows(), values, hermitian }
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

/// Dense Majorana matrices, `N <= DENSE_MAX_N`.
pub fn majorana_matrices(n: usize) -> Result<Vec<OperatorMatrix>> {
    if n > DENSE_MAX_N {
        return Err(Error::TooLarge(format!("dense Majoranas need N <= {DENSE_MAX_N}, got {n}")));
    }
    let dim = 1usize << (n / 2);
    Ok(majorana_strings(n)?.iter().map(|p| OperatorMatrix::new(p.to_dense(dim), true)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub indices: Vec<usize>,
    pub value: f64,
}

/// Gaussian couplings `J_{i1..iq}` with variance `(q-1)! J^2 / N^(q-1)`.
///
/// Each coupling is drawn from its own ChaCha stream, selected by the rank of
/// its index tuple, so any entry can be regenerated in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTensor {
    pub params: ModelParams,
    pub seed: u64,
    pub entries: Vec<Coupling>,
}

/// `C(n, k)` in floating point.
fn binomial_f(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc: u64 = 1;
    for i in 0..k as u64 {
        acc = acc * (n as u64 - i) / (i + 1);
    }
    acc
}

/// Colexicographic rank of a sorted index tuple.
pub fn tuple_rank(indices: &[usize]) -> u64 {
    indices.iter().enumerate().map(|(k, &i)| binomial(i, k + 1)).sum()
}

pub fn coupling_variance(params: &ModelParams) -> f64 {
    let q = params.q;
    let fact: f64 = (1..q).map(|k| k as f64).product();
    fact * params.j * params.j / (params.n as f64).powi(q as i32 - 1)
}

/// The single coupling of `indices` (sorted, distinct) for `seed`.
pub fn coupling_value(params: &ModelParams, seed: u64, indices: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tuple_rank(indices));
    let z: f64 = StandardNormal.sample(&mut rng);
    z * coupling_variance(params).sqrt()
}

fn for_each_tuple(n: usize, q: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..q).collect();
    if q > n {
        return;
    }
    loop {
        f(&idx);
        let mut k = q;
        while k > 0 {
            k -= 1;
            if idx[k] < n - q + k {
                idx[k] += 1;
                for m in k + 1..q {
                    idx[m] = idx[m - 1] + 1;
                }
                break;
            }
            if k == 0 {
                return;
            }
        }
    }
}

impl CouplingTensor {
    pub fn sample(params: &ModelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_n(params.n)?;
        let mut entries = Vec::with_capacity(binomial_f(params.n, params.q) as usize);
        for_each_tuple(params.n, params.q, |idx| {
            entries.push(Coupling { indices: idx.to_vec(), value: coupling_value(params, seed, idx) });
        });
        Ok(Self { params: *params, seed, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that explicit values, if present, match the seed.
    pub fn verify(&self) -> Result<()> {
        let want = binomial(self.params.n, self.params.q) as usize;
        if self.entries.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: self.entries.len() });
        }
        for c in &self.entries {
            let v = coupling_value(&self.params, self.seed, &c.indices);
            if v != c.value {
                return Err(Error::InvalidParams(format!("coupling {:?} does not match seed", c.indices)));
            }
        }
        Ok(())
    }
}

/// `H = sum_I i^(q/2) J_I chi_I` as a list of Pauli strings.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub n: usize,
    pub dim: usize,
    pub terms: Vec<PauliString>,
}

impl SparseHamiltonian {
    pub fn from_couplings(ct: &CouplingTensor) -> Result<Self> {
        let n = ct.params.n;
        let q = ct.params.q;
        let chi = majorana_strings(n)?;
        let mut terms = Vec::with_capacity(ct.entries.len());
        for c in &ct.entries {
            if c.indices.len() != q || c.indices.iter().any(|&i| i >= n) {
                return Err(Error::InvalidParams(format!("coupling {:?} does not fit N={n}, q={q}", c.indices)));
            }
            let mut p = PauliString::identity();
            for &i in &c.indices {
                p = p.mul(&chi[i]);
            }
            p.phase = (p.phase + (q / 2) as u8) % 4;
            p.scale *= c.value;
            terms.push(p);
        }
        Ok(Self { n, dim: 1 << (n / 2), terms })
    }

    /// `H v`.
    pub fn apply(&self, v: &[C]) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); v.len()];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[C], out: &mut [C]) {
        out.iter_mut().for_each(|x| *x = C::new(0.0, 0.0));
        for p in &self.terms {
            let c = p.coefficient();
            for (s, &a) in v.iter().enumerate() {
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                let sign = if (s as u64 & p.z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                out[s ^ p.x as usize] += c * a * sign;
            }
        }
    }

    pub fn to_dense(&self) -> Result<OperatorMatrix> {
        if self.n > DENSE_MAX_N {
            return Err(Error::TooLarge(format!("dense Hamiltonian needs N <= {DENSE_MAX_N}, got {}", self.n)));
        }
        let mut m = Mat::<C>::zeros(self.dim, self.dim);
        for p in &self.terms {
            for s in 0..self.dim {
                let (t, a) = p.act(s);
                m[(t, s)] += a;
            }
        }
        Ok(OperatorMatrix::new(m, true))
    }
}

/// Dense SYK Hamiltonian of a coupling tensor.
pub fn build_hamiltonian(ct: &CouplingTensor) -> Result<OperatorMatrix> {
    SparseHamiltonian::from_couplings(ct)?.to_dense()
}

/// `sqrt(2) chi_i` applied to a state vector (a phased permutation).
pub fn apply_jump(chi: &PauliString, v: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); v.len()];
    let c = chi.coefficient() * std::f64::consts::SQRT_2;
    for (s, &a) in v.iter().enumerate() {
        let sign = if (s as u64 & chi.z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        out[s ^ chi.x as usize] = c * a * sign;
    }
    out
}
