//! Quantum-jump estimate of the purity at finite N.
//!
//! Each side of the doubled system leaks with rate `mu N / 2`; a leak applies
//! `sqrt 2 chi_i` with a uniformly chosen site. Writing both copies of the
//! state in terms of single-side operators, the overlap of two unravelings is
//!
//! `A = Tr[ U+(L+) K U+(R+) U-(R-) K U-(L-) ]`,
//!
//! where `K = exp(-beta H / 2)` and each `U` interleaves `exp(-/+ i H dt)` bin
//! steps with jump insertions at bin midpoints. `U+(L+)` and `U-(R-)` are
//! time-ordered with the latest bin on the left, `U+(R+)` and `U-(L-)` with
//! the earliest bin on the left; the `-` factors use adjoint bins. The purity
//! is `gamma = E|A|^2 / Z^2` with `Z = Tr K^2`.
//!
//! Conjugating the unitaries through gives `A = Tr[K R S K P Q]` with
//! `P = chi'(t'_1)..chi'(t'_b)`, `Q = chi(t_a)..chi(t_1)` built from the L
//! jumps, `R = chi(-t_1)..chi(-t_d)`, `S = chi'(-t'_e)..chi'(-t'_1)` from the
//! R jumps, and `chi(s) = exp(iHs) sqrt2 chi exp(-iHs)`. Only jumps enter, so
//! the cost is independent of the bin width. `PQ` and `RS` are independent,
//! and every trajectory batch is cross-paired: all `M^2` combinations of
//! L-halves and R-halves are valid unravelings.

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorana::{
    expm_apply, ground_state, majorana_strings, BlockOp, CouplingTensor, GroundState, PauliString,
    SparseHamiltonian, Spectrum, DEGENERACY_TOL, DENSE_MAX_N, VECTOR_MAX_N,
};
use crate::params::ModelParams;

type C = Complex64;

/// Largest allowed `mu N dt / 2`.
pub const STEP_GUARD: f64 = 0.05;
/// Default `mu N dt / 2` when no bin width is given.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    #[serde(rename = "L+")]
    LPlus,
    #[serde(rename = "R+")]
    RPlus,
    #[serde(rename = "R-")]
    RMinus,
    #[serde(rename = "L-")]
    LMinus,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::LPlus, Segment::RPlus, Segment::RMinus, Segment::LMinus];
}

/// Jumps of one contour segment. Sites are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segment: Segment,
    /// `(bin, site)` with strictly increasing bins.
    pub jumps: Vec<(usize, usize)>,
    pub n_bins: usize,
    pub dt: f64,
}

impl Trajectory {
    pub fn jump_time(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.dt
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for w in self.jumps.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParams("jump bins must be strictly increasing".into()));
            }
        }
        for &(bin, site) in &self.jumps {
            if bin >= self.n_bins {
                return Err(Error::IndexOutOfRange { index: bin, len: self.n_bins });
            }
            if site >= n {
                return Err(Error::IndexOutOfRange { index: site, len: n });
            }
        }
        Ok(())
    }
}

/// `1 - exp(-mu N dt / 2)`.
pub fn jump_probability(params: &ModelParams, dt: f64) -> f64 {
    -(-0.5 * params.mu * params.n as f64 * dt).exp_m1()
}

fn check_step(params: &ModelParams, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let x = 0.5 * params.mu * params.n as f64 * dt;
    if x > STEP_GUARD {
        return Err(Error::InvalidParams(format!(
            "mu N dt / 2 = {x} exceeds {STEP_GUARD}; reduce dt"
        )));
    }
    Ok(())
}

fn bins_of(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidParams(format!("t = {t} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

fn sample_bins<R: Rng>(params: &ModelParams, segment: Segment, n_bins: usize, dt: f64, rng: &mut R) -> Trajectory {
    sample_with(params.n, jump_probability(params, dt), segment, n_bins, dt, rng)
}

fn sample_with<R: Rng>(n: usize, p: f64, segment: Segment, n_bins: usize, dt: f64, rng: &mut R) -> Trajectory {
    let mut jumps = Vec::new();
    if p > 0.0 {
        for bin in 0..n_bins {
            if rng.random::<f64>() < p {
                jumps.push((bin, rng.random_range(0..n)));
            }
        }
    }
    Trajectory { segment, jumps, n_bins, dt }
}

/// One segment's jump record on `[0, t]` with `t` a multiple of `dt`.
pub fn sample_trajectory<R: Rng>(
    params: &ModelParams,
    segment: Segment,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    params.validate()?;
    check_step(params, dt)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t must be >= 0, got {t}")));
    }
    Ok(sample_bins(params, segment, bins_of(t, dt)?, dt, rng))
}

/// Which segment of a half is sampled first under a copying proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lead {
    Plus,
    Minus,
}

/// One component of the sampling proposal for a half `(X+, X-)` of a tuple.
///
/// The leading segment jumps with probability `r = rate * dp` per bin and a
/// uniform site. In bin `c` the other segment jumps on site `j` with
/// probability `r / N + copy * m_j / (w + 1)`, where `m_j` counts leading
/// jumps on site `j` in bins `[c - w, c]` and `w = round(window / dt)`. Copies
/// put pairs of equal-site jumps close in time, whose contributions to the
/// amplitude largely cancel; such pairs carry the short-time purity. Both
/// densities factorize over bins, so the likelihood ratio of any prefix is
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub rate: f64,
    #[serde(default)]
    pub copy: f64,
    /// Copy window in time units.
    #[serde(default)]
    pub window: f64,
    #[serde(default = "default_lead")]
    pub lead: Lead,
}

fn default_lead() -> Lead {
    Lead::Plus
}

impl Proposal {
    pub const PLAIN: Proposal = Proposal { rate: 1.0, copy: 0.0, window: 0.0, lead: Lead::Plus };

    pub fn rate(rate: f64) -> Self {
        Proposal { rate, ..Self::PLAIN }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rate > 0.0
            && self.rate <= 1.0
            && self.copy >= 0.0
            && self.copy < 1.0
            && self.window >= 0.0
            && self.window.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!(
                "proposal needs rate in (0, 1], copy in [0, 1) and a finite window >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn window_bins(&self, dt: f64) -> usize {
        (self.window / dt).round() as usize
    }

    /// `(leader, follower)` positions within `(plus, minus)`.
    fn roles<'a>(&self, plus: &'a Trajectory, minus: &'a Trajectory) -> (&'a Trajectory, &'a Trajectory) {
        match self.lead {
            Lead::Plus => (plus, minus),
            Lead::Minus => (minus, plus),
        }
    }

    fn sample_half<R: Rng>(&self, p: f64, n: usize, segs: [Segment; 2], n_bins: usize, dt: f64, rng: &mut R) -> [Trajectory; 2] {
        let r = self.rate * p;
        let w = self.window_bins(dt);
        let mut lead = Vec::new();
        for bin in 0..n_bins {
            if rng.random::<f64>() < r {
                lead.push((bin, rng.random_range(0..n)));
            }
        }
        let mut follow = Vec::new();
        let mut lo = 0;
        for c in 0..n_bins {
            while lo < lead.len() && lead[lo].0 + w < c {
                lo += 1;
            }
            let hi = lead.partition_point(|x: &(usize, usize)| x.0 <= c);
            let near = &lead[lo..hi];
            let u = rng.random::<f64>();
            if u < r {
                follow.push((c, rng.random_range(0..n)));
            } else if self.copy > 0.0 && u < r + self.copy * near.len() as f64 / (w + 1) as f64 {
                follow.push((c, near[rng.random_range(0..near.len())].1));
            }
        }
        let (a, b) = match self.lead {
            Lead::Plus => (lead, follow),
            Lead::Minus => (follow, lead),
        };
        [
            Trajectory { segment: segs[0], jumps: a, n_bins, dt },
            Trajectory { segment: segs[1], jumps: b, n_bins, dt },
        ]
    }

    /// `ln Q` of the half restricted to bins `< nb`, for every `nb` in `bins`.
    fn log_density(&self, plus: &Trajectory, minus: &Trajectory, p: f64, n: usize, bins: &[usize]) -> Vec<f64> {
        let r = self.rate * p;
        let nf = n as f64;
        let w = self.window_bins(plus.dt);
        let (lead, follow) = self.roles(plus, minus);
        let (lead, follow) = (&lead.jumps, &follow.jumps);
        let mut out = Vec::with_capacity(bins.len());
        let mut acc = 0.0;
        let (mut li, mut fi, mut lo) = (0, 0, 0);
        let mut c = 0;
        for &nb in bins {
            while c < nb {
                // leading segment
                if li < lead.len() && lead[li].0 == c {
                    acc += (r / nf).ln();
                    li += 1;
                } else {
                    acc += (-r).ln_1p();
                }
                // following segment, given leading jumps in [c - w, c]
                while lo < li && lead[lo].0 + w < c {
                    lo += 1;
                }
                let near = &lead[lo..li];
                let g = self.copy / (w + 1) as f64;
                if fi < follow.len() && follow[fi].0 == c {
                    let site = follow[fi].1;
                    let m = near.iter().filter(|x| x.1 == site).count() as f64;
                    acc += (r / nf + g * m).ln();
                    fi += 1;
                } else {
                    acc += (1.0 - r - g * near.len() as f64).ln();
                }
                c += 1;
            }
            out.push(acc);
        }
        out
    }
}

/// `P / mean_c Q_c` of a half at every output bin.
fn half_weights(plus: &Trajectory, minus: &Trajectory, p: f64, n: usize, mixture: &[Proposal], bins: &[usize]) -> Vec<f64> {
    let own = Proposal::PLAIN.log_density(plus, minus, p, n, bins);
    let logs: Vec<Vec<f64>> = mixture.iter().map(|m| m.log_density(plus, minus, p, n, bins)).collect();
    (0..bins.len())
        .map(|k| {
            let top = logs.iter().map(|l| l[k]).fold(f64::NEG_INFINITY, f64::max);
            let mean = logs.iter().map(|l| (l[k] - top).exp()).sum::<f64>() / mixture.len() as f64;
            (own[k] - top).exp() / mean
        })
        .collect()
}

/// A sampled tuple with its importance weights.
struct Draw {
    tuple: [Trajectory; 4],
    /// Likelihood ratio of the L and R halves at every output bin.
    weights: Vec<[f64; 2]>,
}

/// Samples a tuple from `mixture` (equal weights, one component drawn per
/// half). The plain proposal alone reproduces the physical unraveling with
/// unit weights and draws no extra random numbers.
fn sample_tuple<R: Rng>(params: &ModelParams, n_bins: usize, dt: f64, mixture: &[Proposal], bins: &[usize], rng: &mut R) -> Draw {
    if mixture == [Proposal::PLAIN] {
        let tuple = Segment::ALL.map(|s| sample_bins(params, s, n_bins, dt, rng));
        return Draw { tuple, weights: vec![[1.0, 1.0]; bins.len()] };
    }
    let p = jump_probability(params, dt);
    let n = params.n;
    let mut pick = || if mixture.len() > 1 { mixture[rng.random_range(0..mixture.len())] } else { mixture[0] };
    let (cl, cr) = (pick(), pick());
    let [lp, lm] = cl.sample_half(p, n, [Segment::LPlus, Segment::LMinus], n_bins, dt, rng);
    let [rp, rm] = cr.sample_half(p, n, [Segment::RPlus, Segment::RMinus], n_bins, dt, rng);
    let wl = half_weights(&lp, &lm, p, n, mixture, bins);
    let wr = half_weights(&rp, &rm, p, n, mixture, bins);
    let weights = wl.into_iter().zip(wr).map(|(a, b)| [a, b]).collect();
    Draw { tuple: [lp, rp, rm, lm], weights }
}

/// Bin width for a time list: the largest width within the guard that
/// divides every time.
pub fn choose_dt(params: &ModelParams, t_list: &[f64]) -> Result<f64> {
    let rate = 0.5 * params.mu * params.n as f64;
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let mut h = f64::INFINITY;
    let mut prev = 0.0;
    for &t in t_list {
        if t > prev + 1e-12 {
            h = h.min(t - prev);
        }
        prev = t;
    }
    if !h.is_finite() {
        h = t_max.max(1.0);
    }
    let target = if rate > 0.0 { DEFAULT_STEP / rate } else { h };
    let dt = h / (h / target).ceil();
    for &t in t_list {
        bins_of(t, dt).map_err(|_| {
            Error::InvalidParams("output times are not commensurate; give dt explicitly".into())
        })?;
    }
    Ok(dt)
}

// ---------------------------------------------------------------------------
// dense path

/// Spectrum and jump operators of one disorder realization.
pub struct DenseEngine {
    spec: Spectrum,
    jumps: Vec<BlockOp>,
    /// Diagonal of `K` per parity sector, shifted by the ground energy.
    k: [Vec<C>; 2],
    /// `Tr K^2` in the same shift.
    pub z: f64,
    pub degeneracy: Option<usize>,
}

impl DenseEngine {
    pub fn new(h: &SparseHamiltonian, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidParams(format!("beta must be >= 0, got {beta}")));
        }
        let spec = Spectrum::new(h)?;
        let chis = majorana_strings(h.n)?;
        let jumps = chis.iter().map(|c| spec.transform_odd(c)).collect();
        let e0 = spec.ground_energy();
        let tol = DEGENERACY_TOL * (1.0 + e0.abs());
        let (k, degeneracy) = if beta.is_infinite() {
            (spec.phases(|e| C::new(if e - e0 <= tol { 1.0 } else { 0.0 }, 0.0)), Some(spec.ground_degeneracy(tol)))
        } else {
            (spec.phases(|e| C::new((-0.5 * beta * (e - e0)).exp(), 0.0)), None)
        };
        let z = k.iter().flatten().map(|x| x.norm_sqr()).sum();
        Ok(Self { spec, jumps, k, z, degeneracy })
    }

    /// `exp(iHs) sqrt2 chi_site exp(-iHs)`.
    fn chi_at(&self, site: usize, s: f64) -> BlockOp {
        let mut op = self.jumps[site].clone();
        let sq2 = std::f64::consts::SQRT_2;
        let left = self.spec.phases(|e| C::from_polar(sq2, e * s));
        let right = self.spec.phases(|e| C::from_polar(1.0, -e * s));
        op.scale(&left, &right);
        op
    }

    fn mul_opt(a: &Option<BlockOp>, b: &Option<BlockOp>) -> Option<BlockOp> {
        match (a, b) {
            (None, None) => None,
            (Some(x), None) => Some(x.clone()),
            (None, Some(y)) => Some(y.clone()),
            (Some(x), Some(y)) => Some(x.mul(y)),
        }
    }

    fn identity(&self) -> BlockOp {
        BlockOp::identity(self.spec.half())
    }

    /// `A` for one set of four segments at time `n_bins * dt`.
    pub fn amplitude(&self, trajs: &[Trajectory; 4]) -> Result<C> {
        let mut state = PairState::default();
        let n_bins = check_tuple(trajs, self.jumps.len())?;
        state.advance(self, trajs, n_bins);
        let (x, y) = state.halves(self);
        Ok(self.sandwich(&y).trace_product(&x))
    }

    /// `K Y K`.
    fn sandwich(&self, y: &BlockOp) -> BlockOp {
        let mut out = y.clone();
        out.scale(&self.k, &self.k);
        out
    }

    /// Sum over all cross pairs of `|A|^2 / Z^2`, one entry per output bin.
    fn batch(&self, draws: &[Draw], bins: &[usize]) -> Vec<f64> {
        let mut states: Vec<PairState> = draws.iter().map(|_| PairState::default()).collect();
        let mut out = Vec::with_capacity(bins.len());
        for (k, &nb) in bins.iter().enumerate() {
            let mut xs = Vec::with_capacity(draws.len());
            let mut ys = Vec::with_capacity(draws.len());
            for (st, d) in states.iter_mut().zip(draws) {
                st.advance(self, &d.tuple, nb);
                let (x, y) = st.halves(self);
                xs.push(x);
                ys.push(self.sandwich(&y));
            }
            let mut total = 0.0;
            for odd in [false, true] {
                let xi: Vec<usize> = (0..xs.len()).filter(|&i| xs[i].odd == odd).collect();
                let yi: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].odd == odd).collect();
                let xf = features(xi.iter().map(|&i| &xs[i]), true);
                let yf = features(yi.iter().map(|&i| &ys[i]), false);
                if let (Some(xf), Some(yf)) = (xf, yf) {
                    let amp = &xf * yf.transpose();
                    for (j, &b) in yi.iter().enumerate() {
                        let mut col = 0.0;
                        for (i, &a) in xi.iter().enumerate() {
                            col += draws[a].weights[k][0] * amp[(i, j)].norm_sqr();
                        }
                        total += draws[b].weights[k][1] * col;
                    }
                }
            }
            out.push(total / (self.z * self.z));
        }
        out
    }
}

/// Rows such that `Tr[Y X] = xrow . yrow` for operators of equal parity.
fn features<'a>(ops: impl Iterator<Item = &'a BlockOp>, transpose: bool) -> Option<Mat<C>> {
    let ops: Vec<&BlockOp> = ops.collect();
    if ops.is_empty() {
        return None;
    }
    let h = ops[0].blocks[0].nrows();
    let mut f = Mat::<C>::zeros(ops.len(), 2 * h * h);
    for (r, op) in ops.iter().enumerate() {
        for slot in 0..2 {
            let src = if transpose && op.odd { 1 - slot } else { slot };
            let b = &op.blocks[src];
            let base = slot * h * h;
            for a in 0..h {
                for c in 0..h {
                    f[(r, base + a * h + c)] = if transpose { b[(c, a)] } else { b[(a, c)] };
                }
            }
        }
    }
    Some(f)
}

fn check_tuple(trajs: &[Trajectory; 4], n: usize) -> Result<usize> {
    let n_bins = trajs[0].n_bins;
    for (tr, seg) in trajs.iter().zip(Segment::ALL) {
        if tr.segment != seg {
            return Err(Error::InvalidParams(format!("expected segment {seg:?}, got {:?}", tr.segment)));
        }
        if tr.n_bins != n_bins || tr.dt != trajs[0].dt {
            return Err(Error::InvalidParams("segments must share t and dt".into()));
        }
        tr.validate(n)?;
    }
    Ok(n_bins)
}

/// Running `P, Q, R, S`; `None` stands for the identity.
#[derive(Default)]
struct PairState {
    cursor: [usize; 4],
    p: Option<BlockOp>,
    q: Option<BlockOp>,
    r: Option<BlockOp>,
    s: Option<BlockOp>,
}

impl PairState {
    fn advance(&mut self, eng: &DenseEngine, trajs: &[Trajectory; 4], n_bins: usize) {
        for (k, tr) in trajs.iter().enumerate() {
            while self.cursor[k] < tr.jumps.len() && tr.jumps[self.cursor[k]].0 < n_bins {
                let (bin, site) = tr.jumps[self.cursor[k]];
                let s = tr.jump_time(bin);
                match tr.segment {
                    Segment::LPlus => {
                        let c = Some(eng.chi_at(site, s));
                        self.q = DenseEngine::mul_opt(&c, &self.q);
                    }
                    Segment::LMinus => {
                        let c = Some(eng.chi_at(site, s));
                        self.p = DenseEngine::mul_opt(&self.p, &c);
                    }
                    Segment::RPlus => {
                        let c = Some(eng.chi_at(site, -s));
                        self.r = DenseEngine::mul_opt(&self.r, &c);
                    }
                    Segment::RMinus => {
                        let c = Some(eng.chi_at(site, -s));
                        self.s = DenseEngine::mul_opt(&c, &self.s);
                    }
                }
                self.cursor[k] += 1;
            }
        }
    }

    fn halves(&self, eng: &DenseEngine) -> (BlockOp, BlockOp) {
        let x = DenseEngine::mul_opt(&self.p, &self.q).unwrap_or_else(|| eng.identity());
        let y = DenseEngine::mul_opt(&self.r, &self.s).unwrap_or_else(|| eng.identity());
        (x, y)
    }
}

// ---------------------------------------------------------------------------
// vector path, infinite beta

/// Ground-space overlaps for `beta = infinity` without dense matrices.
///
/// With `K` the ground projector, `A = sum_{g,g'} <V(L-) g|V(L+) g'> <W(R+) g'|W(R-) g>`
/// where `V` evolves a state forward through a segment's jumps and `W` does
/// the same with `exp(+iHt)`.
pub struct VectorEngine {
    h: SparseHamiltonian,
    chis: Vec<PauliString>,
    pub ground: GroundState,
    tol: f64,
}

impl VectorEngine {
    pub fn new(h: &SparseHamiltonian, tol: f64) -> Result<Self> {
        Ok(Self { h: h.clone(), chis: majorana_strings(h.n)?, ground: ground_state(h, tol)?, tol })
    }

    /// States of one segment at each output bin.
    fn evolve(&self, start: &[C], tr: &Trajectory, bins: &[usize], sign: f64) -> Result<Vec<Vec<C>>> {
        let mut v = start.to_vec();
        let mut now = 0.0;
        let mut cursor = 0;
        let mut out = Vec::with_capacity(bins.len());
        for &nb in bins {
            while cursor < tr.jumps.len() && tr.jumps[cursor].0 < nb {
                let (bin, site) = tr.jumps[cursor];
                let s = tr.jump_time(bin);
                v = expm_apply(&self.h, &v, sign * (s - now), self.tol)?;
                v = crate::majorana::apply_jump(&self.chis[site], &v);
                now = s;
                cursor += 1;
            }
            let t = nb as f64 * tr.dt;
            v = expm_apply(&self.h, &v, sign * (t - now), self.tol)?;
            now = t;
            out.push(v.clone());
        }
        Ok(out)
    }

    /// `(X, Y)` with `A = Tr[X Y]` at each output bin.
    fn halves(&self, trajs: &[Trajectory; 4], bins: &[usize]) -> Result<Vec<(Mat<C>, Mat<C>)>> {
        let d = self.ground.degeneracy;
        let g = &self.ground.vectors;
        let ev = |seg: usize, sign: f64| -> Result<Vec<Vec<Vec<C>>>> {
            g.iter().map(|v| self.evolve(v, &trajs[seg], bins, sign)).collect()
        };
        let lp = ev(0, 1.0)?;
        let rp = ev(1, -1.0)?;
        let rm = ev(2, -1.0)?;
        let lm = ev(3, 1.0)?;
        let dot = |a: &[C], b: &[C]| -> C { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        let mut out = Vec::with_capacity(bins.len());
        for k in 0..bins.len() {
            let mut x = Mat::<C>::zeros(d, d);
            let mut y = Mat::<C>::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    x[(a, b)] = dot(&lm[a][k], &lp[b][k]);
                    y[(b, a)] = dot(&rp[b][k], &rm[a][k]);
                }
            }
            out.push((x, y));
        }
        Ok(out)
    }

    pub fn amplitude(&self, trajs: &[Trajectory; 4]) -> Result<C> {
        let n_bins = check_tuple(trajs, self.chis.len())?;
        let (x, y) = self.halves(trajs, &[n_bins])?.remove(0);
        Ok(trace_product(&x, &y))
    }

    fn batch(&self, draws: &[Draw], bins: &[usize]) -> Result<Vec<f64>> {
        let halves: Vec<Vec<(Mat<C>, Mat<C>)>> =
            draws.iter().map(|d| self.halves(&d.tuple, bins)).collect::<Result<_>>()?;
        let z = self.ground.degeneracy as f64;
        Ok((0..bins.len())
            .map(|k| {
                let mut total = 0.0;
                for (xi, dx) in halves.iter().zip(draws) {
                    for (yj, dy) in halves.iter().zip(draws) {
                        let w = dx.weights[k][0] * dy.weights[k][1];
                        total += w * trace_product(&xi[k].0, &yj[k].1).norm_sqr();
                    }
                }
                total / (z * z)
            })
            .collect())
    }
}

fn trace_product(a: &Mat<C>, b: &Mat<C>) -> C {
    let mut s = C::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

// ---------------------------------------------------------------------------
// estimator

/// Evaluation route for one realization.
pub enum Engine {
    Dense(DenseEngine),
    Vector(VectorEngine),
}

impl Engine {
    /// Dense up to the dense ceiling; beyond it only `beta = infinity` is
    /// reachable, through ground-state vectors.
    pub fn new(ct: &CouplingTensor, beta: f64) -> Result<Self> {
        let h = SparseHamiltonian::from_couplings(ct)?;
        if h.n <= DENSE_MAX_N {
            Ok(Engine::Dense(DenseEngine::new(&h, beta)?))
        } else if beta.is_infinite() {
            Ok(Engine::Vector(VectorEngine::new(&h, 1e-10)?))
        } else {
            Err(Error::TooLarge(format!(
                "N = {} above {DENSE_MAX_N} is only supported at beta = inf",
                h.n
            )))
        }
    }

    pub fn amplitude(&self, trajs: &[Trajectory; 4]) -> Result<C> {
        match self {
            Engine::Dense(e) => e.amplitude(trajs),
            Engine::Vector(e) => e.amplitude(trajs),
        }
    }

    /// `Tr K^2` in the engine's energy shift.
    pub fn z(&self) -> f64 {
        match self {
            Engine::Dense(e) => e.z,
            Engine::Vector(e) => e.ground.degeneracy as f64,
        }
    }

    fn batch(&self, draws: &[Draw], bins: &[usize]) -> Result<Vec<f64>> {
        match self {
            Engine::Dense(e) => Ok(e.batch(draws, bins)),
            Engine::Vector(e) => e.batch(draws, bins),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySettings {
    /// Sampled four-segment unravelings per disorder realization.
    pub n_traj: usize,
    pub n_disorder: usize,
    pub master_seed: u64,
    /// Bin width; chosen from the time list when absent.
    pub dt: Option<f64>,
    /// Unravelings per batch; each batch is cross-paired.
    pub batch_size: usize,
    /// Mixture the halves of each tuple are drawn from; the estimate is
    /// reweighted by the exact likelihood ratio. The plain proposal alone
    /// samples the physical unraveling directly.
    #[serde(default = "plain_proposal")]
    pub proposal: Vec<Proposal>,
}

fn plain_proposal() -> Vec<Proposal> {
    vec![Proposal::PLAIN]
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { n_traj: 1000, n_disorder: 1, master_seed: 0, dt: None, batch_size: 20, proposal: plain_proposal() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityEstimate {
    pub t: f64,
    pub gamma_mean: f64,
    pub gamma_stderr: f64,
    pub n_traj: usize,
    pub n_disorder: usize,
    pub master_seed: u64,
    pub entropy: f64,
    pub entropy_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationEstimate {
    pub coupling_seed: u64,
    pub gamma: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityRun {
    pub params: ModelParams,
    pub settings: TrajectorySettings,
    pub dt: f64,
    pub estimates: Vec<PurityEstimate>,
    pub realizations: Vec<RealizationEstimate>,
}

/// Coupling seed of disorder realization `r`.
pub fn disorder_seed(master_seed: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(r as u64);
    rng.random()
}

fn batch_rng(master_seed: u64, r: usize, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x7472_616a_6563_746f);
    rng.set_stream(((r as u64) << 32) | b as u64);
    rng
}

pub fn estimate_purity(params: &ModelParams, t_list: &[f64], settings: &TrajectorySettings) -> Result<Vec<PurityEstimate>> {
    Ok(estimate_purity_detailed(params, t_list, settings)?.estimates)
}

/// Annealed purity over `n_disorder` realizations with batch-means errors.
pub fn estimate_purity_detailed(
    params: &ModelParams,
    t_list: &[f64],
    settings: &TrajectorySettings,
) -> Result<PurityRun> {
    params.validate()?;
    if params.n > VECTOR_MAX_N {
        return Err(Error::TooLarge(format!("N = {} exceeds {VECTOR_MAX_N}", params.n)));
    }
    if settings.n_traj < 100 {
        return Err(Error::InvalidParams(format!("n_traj must be >= 100, got {}", settings.n_traj)));
    }
    if settings.n_disorder == 0 || settings.batch_size == 0 {
        return Err(Error::InvalidParams("n_disorder and batch_size must be positive".into()));
    }
    if settings.proposal.is_empty() {
        return Err(Error::InvalidParams("the proposal mixture is empty".into()));
    }
    for m in &settings.proposal {
        m.validate()?;
    }
    let n_batches = settings.n_traj.div_ceil(settings.batch_size);
    if n_batches < 2 {
        return Err(Error::InvalidParams("need at least two batches for an error estimate".into()));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] < w[0]) || t_list[0] < 0.0 {
        return Err(Error::InvalidParams("t_list must be non-empty, non-negative and ascending".into()));
    }
    let dt = match settings.dt {
        Some(dt) => dt,
        None => choose_dt(params, t_list)?,
    };
    check_step(params, dt)?;
    let bins: Vec<usize> = t_list.iter().map(|&t| bins_of(t, dt)).collect::<Result<_>>()?;
    let n_max = *bins.last().unwrap();

    let realizations: Vec<RealizationEstimate> = (0..settings.n_disorder)
        .map(|r| {
            let seed = disorder_seed(settings.master_seed, r);
            let ct = CouplingTensor::sample(params, seed)?;
            let engine = Engine::new(&ct, params.beta)?;
            let means: Vec<Vec<f64>> = (0..n_batches)
                .into_par_iter()
                .map(|b| {
                    let m = settings.batch_size.min(settings.n_traj - b * settings.batch_size);
                    let mut rng = batch_rng(settings.master_seed, r, b);
                    let draws: Vec<Draw> = (0..m)
                        .map(|_| sample_tuple(params, n_max, dt, &settings.proposal, &bins, &mut rng))
                        .collect();
                    let sums = engine.batch(&draws, &bins)?;
                    Ok(sums.iter().map(|s| s / (m * m) as f64).collect())
                })
                .collect::<Result<_>>()?;
            let nb = means.len() as f64;
            let mut gamma = vec![0.0; bins.len()];
            let mut stderr = vec![0.0; bins.len()];
            for k in 0..bins.len() {
                let mean = means.iter().map(|v| v[k]).sum::<f64>() / nb;
                let var = means.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
                gamma[k] = mean;
                stderr[k] = (var / nb).sqrt();
            }
            Ok(RealizationEstimate { coupling_seed: seed, gamma, stderr })
        })
        .collect::<Result<_>>()?;

    let nr = realizations.len() as f64;
    let estimates = t_list
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let g = realizations.iter().map(|r| r.gamma[k]).sum::<f64>() / nr;
            let e = realizations.iter().map(|r| r.stderr[k].powi(2)).sum::<f64>().sqrt() / nr;
            PurityEstimate {
                t,
                gamma_mean: g,
                gamma_stderr: e,
                n_traj: settings.n_traj,
                n_disorder: settings.n_disorder,
                master_seed: settings.master_seed,
                entropy: -g.ln(),
                entropy_stderr: e / g,
            }
        })
        .collect();
    Ok(PurityRun { params: *params, settings: settings.clone(), dt, estimates, realizations })
}
