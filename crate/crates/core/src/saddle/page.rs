//! Entropy sweeps over time and dissipation strength.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{seed, solve_saddle_from, BilocalField, SaddleSolution, SeedClass, SolverSettings};
use crate::contour::{default_imag_points, ContourGrid};
use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageCurveSettings {
    /// Points per real-time branch.
    pub n_steps: usize,
    /// Points per imaginary arc; defaults to a quarter of `n_steps`.
    pub n_imag: Option<usize>,
    pub solver: SolverSettings,
    /// Relative entropy difference below which both seeds are treated as
    /// the same saddle.
    pub merge_tol: f64,
}

impl Default for PageCurveSettings {
    fn default() -> Self {
        Self { n_steps: 200, n_imag: None, solver: SolverSettings::default(), merge_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Entropy of the whole system, `N (S2 - 2 S1) / N`.
    pub entropy: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `max |G_ab|` over the inter-replica block.
    pub inter_replica: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageCurve {
    pub params: ModelParams,
    pub settings: PageCurveSettings,
    pub times: Vec<f64>,
    pub s_diag: Vec<Option<f64>>,
    pub s_worm: Vec<Option<f64>>,
    pub s_min: Vec<Option<f64>>,
    pub dominant: Vec<Option<SeedClass>>,
    pub diag: Vec<BranchPoint>,
    pub worm: Vec<BranchPoint>,
    /// `S1 / N` of the single-replica normalization.
    pub s1: Vec<f64>,
    pub page_time: Option<f64>,
    pub slope_gap: f64,
}

impl PageCurve {
    pub fn csv_header() -> &'static str {
        "t,S_diag,S_worm,S_min,dominant,residual_diag,residual_worm"
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_else(|| "nan".into());
        for i in 0..self.times.len() {
            let dom = match self.dominant[i] {
                Some(SeedClass::Diagonal) => "diagonal",
                Some(SeedClass::Wormhole) => "wormhole",
                None => "none",
            };
            writeln!(
                out,
                "{:.16e},{},{},{},{},{:.16e},{:.16e}",
                self.times[i],
                opt(self.s_diag[i]),
                opt(self.s_worm[i]),
                opt(self.s_min[i]),
                dom,
                self.diag[i].residual,
                self.worm[i].residual
            )?;
        }
        Ok(())
    }
}

fn grid_for(params: &ModelParams, t: f64, settings: &PageCurveSettings, replicas: usize) -> Result<ContourGrid> {
    let n_imag = settings.n_imag.unwrap_or_else(|| default_imag_points(settings.n_steps));
    ContourGrid::build(params, t, settings.n_steps, n_imag, replicas)
}

/// A solve kept during a sweep; the field is retained for warm starts.
struct Solved {
    point: BranchPoint,
    action: f64,
    g: Option<BilocalField>,
}

struct Sample {
    t: f64,
    s1: Option<Solved>,
    diag: Option<Solved>,
    worm: Option<Solved>,
}

fn solve_one(
    params: &ModelParams,
    t: f64,
    class: SeedClass,
    replicas: usize,
    start: Option<&BilocalField>,
    settings: &PageCurveSettings,
) -> Result<Solved> {
    let grid = grid_for(params, t, settings, replicas)?;
    let fresh = || seed(&grid, class);
    let first = start.cloned().unwrap_or_else(fresh);
    let sol: SaddleSolution = match solve_saddle_from(&grid, params, class, first, &settings.solver) {
        Ok(s) => s,
        Err(Error::SingularKernel { .. }) if start.is_some() => {
            solve_saddle_from(&grid, params, class, fresh(), &settings.solver)?
        }
        Err(e) => return Err(e),
    };
    let point = BranchPoint {
        entropy: None,
        residual: sol.residual,
        iterations: sol.iterations,
        converged: sol.converged,
        inter_replica: super::inter_replica_max(&sol.g, &grid),
    };
    Ok(Solved {
        point,
        action: sol.action.re,
        g: if sol.converged { Some(sol.g) } else { None },
    })
}

/// Warm-started sweep of one seed class, visiting samples in `order`.
fn sweep(
    params: &ModelParams,
    samples: &mut [Sample],
    order: &[usize],
    class: SeedClass,
    replicas: usize,
    settings: &PageCurveSettings,
) -> Result<()> {
    let mut prev: Option<BilocalField> = None;
    for &i in order {
        let solved = solve_one(params, samples[i].t, class, replicas, prev.as_ref(), settings)?;
        if solved.g.is_some() {
            prev = solved.g.clone();
        }
        let slot = match (replicas, class) {
            (1, _) => &mut samples[i].s1,
            (_, SeedClass::Diagonal) => &mut samples[i].diag,
            (_, SeedClass::Wormhole) => &mut samples[i].worm,
        };
        *slot = Some(solved);
    }
    Ok(())
}

fn entropy_of(branch: &Option<Solved>, s1: &Option<Solved>, n_sys: f64) -> Option<f64> {
    let b = branch.as_ref()?;
    let s1 = s1.as_ref()?;
    if b.point.converged && s1.point.converged {
        Some(n_sys * (b.action - 2.0 * s1.action))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Diagonal,
    Wormhole,
}

/// Which saddle dominates at a sample, if known. Coinciding branches count
/// as diagonal.
fn side(d: Option<f64>, w: Option<f64>, merge_tol: f64, n_sys: f64) -> Option<Side> {
    match (d, w) {
        (Some(d), Some(w)) => {
            if (d - w).abs() <= merge_tol * n_sys.max(d.abs()) || d <= w {
                Some(Side::Diagonal)
            } else {
                Some(Side::Wormhole)
            }
        }
        (Some(_), None) => Some(Side::Diagonal),
        (None, Some(_)) => Some(Side::Wormhole),
        (None, None) => None,
    }
}

fn distinct(d: Option<f64>, w: Option<f64>, merge_tol: f64, n_sys: f64) -> bool {
    matches!((d, w), (Some(d), Some(w)) if (d - w).abs() > merge_tol * n_sys.max(d.abs()))
}

/// Adjacent known samples where the dominant saddle switches from diagonal
/// to wormhole.
fn bracket(samples: &[Sample], merge_tol: f64, n_sys: f64) -> Option<(usize, usize)> {
    let known: Vec<(usize, Side)> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            side(entropy_of(&s.diag, &s.s1, n_sys), entropy_of(&s.worm, &s.s1, n_sys), merge_tol, n_sys)
                .map(|x| (i, x))
        })
        .collect();
    known
        .windows(2)
        .find(|w| w[0].1 == Side::Diagonal && w[1].1 == Side::Wormhole)
        .map(|w| (w[0].0, w[1].0))
}

/// Most bisections spent resolving a crossing.
const MAX_REFINE: usize = 8;

/// Both saddle branches of `S = S2 - 2 S1` along `t_list`.
///
/// The diagonal branch is swept forward in time and the wormhole branch
/// backward, each warm-started from its neighbour, so that every branch is
/// followed continuously as far as it exists. When the switch of dominant
/// saddle is not bracketed by samples where both branches exist, the
/// bracketing interval is bisected; the extra times appear in the output.
pub fn page_curve(params: &ModelParams, t_list: &[f64], settings: &PageCurveSettings) -> Result<PageCurve> {
    params.validate()?;
    if t_list.is_empty() {
        return Err(Error::InvalidParams("t_list is empty".into()));
    }
    if t_list.windows(2).any(|w| !(w[1] > w[0])) || t_list[0] < 0.0 {
        return Err(Error::InvalidParams("t_list must be non-negative and strictly ascending".into()));
    }
    let n_sys = params.n as f64;
    let mut samples: Vec<Sample> =
        t_list.iter().map(|&t| Sample { t, s1: None, diag: None, worm: None }).collect();
    let n = samples.len();
    let ascending: Vec<usize> = (0..n).collect();
    let descending: Vec<usize> = (0..n).rev().collect();
    sweep(params, &mut samples, &ascending, SeedClass::Diagonal, 1, settings)?;
    sweep(params, &mut samples, &ascending, SeedClass::Diagonal, 2, settings)?;
    sweep(params, &mut samples, &descending, SeedClass::Wormhole, 2, settings)?;

    for _ in 0..MAX_REFINE {
        let Some((i, j)) = bracket(&samples, settings.merge_tol, n_sys) else { break };
        let e = |s: &Sample| (entropy_of(&s.diag, &s.s1, n_sys), entropy_of(&s.worm, &s.s1, n_sys));
        let (di, wi) = e(&samples[i]);
        let (dj, wj) = e(&samples[j]);
        if distinct(di, wi, settings.merge_tol, n_sys) && distinct(dj, wj, settings.merge_tol, n_sys) && j == i + 1 {
            break;
        }
        let t = 0.5 * (samples[i].t + samples[j].t);
        let s1 = solve_one(params, t, SeedClass::Diagonal, 1, samples[i].s1.as_ref().and_then(|s| s.g.as_ref()), settings)?;
        let diag = solve_one(params, t, SeedClass::Diagonal, 2, samples[i].diag.as_ref().and_then(|s| s.g.as_ref()), settings)?;
        let worm = solve_one(params, t, SeedClass::Wormhole, 2, samples[j].worm.as_ref().and_then(|s| s.g.as_ref()), settings)?;
        samples.insert(i + 1, Sample { t, s1: Some(s1), diag: Some(diag), worm: Some(worm) });
    }

    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let mut s1 = Vec::with_capacity(samples.len());
    for s in &samples {
        let x = s.s1.as_ref().expect("swept");
        if !x.point.converged {
            return Err(Error::Numerical(format!(
                "single-replica saddle did not converge at t = {} (residual {:e})",
                s.t, x.point.residual
            )));
        }
        s1.push(x.action);
    }

    let mut curve = PageCurve {
        params: *params,
        settings: *settings,
        times,
        s_diag: Vec::new(),
        s_worm: Vec::new(),
        s_min: Vec::new(),
        dominant: Vec::new(),
        diag: Vec::new(),
        worm: Vec::new(),
        s1,
        page_time: None,
        slope_gap: 0.0,
    };
    for s in &samples {
        let d = entropy_of(&s.diag, &s.s1, n_sys);
        let w = entropy_of(&s.worm, &s.s1, n_sys);
        let (s_min, dom) = match (d, w) {
            (Some(a), Some(b)) if b < a => (Some(b), Some(SeedClass::Wormhole)),
            (Some(a), _) => (Some(a), Some(SeedClass::Diagonal)),
            (None, Some(b)) => (Some(b), Some(SeedClass::Wormhole)),
            (None, None) => (None, None),
        };
        let point = |b: &Option<Solved>, e: Option<f64>| {
            let mut p = b.as_ref().expect("swept").point.clone();
            p.entropy = e;
            p
        };
        curve.s_diag.push(d);
        curve.s_worm.push(w);
        curve.s_min.push(s_min);
        curve.dominant.push(dom);
        curve.diag.push(point(&s.diag, d));
        curve.worm.push(point(&s.worm, w));
    }
    let (page_time, gap) = crossing(&curve, &samples, settings.merge_tol);
    curve.page_time = page_time;
    curve.slope_gap = gap;
    Ok(curve)
}

/// Page time and slope gap `|d_t S_diag - d_t S_worm| / (mu N)`.
///
/// When both branches exist on both ends of the switching interval the
/// crossing is interpolated linearly and the slopes are the secants of each
/// branch across it. Otherwise each slope is a one-sided difference on its
/// own side of the interval and the crossing is placed at its midpoint.
fn crossing(curve: &PageCurve, samples: &[Sample], merge_tol: f64) -> (Option<f64>, f64) {
    let n_sys = curve.params.n as f64;
    let Some((i, j)) = bracket(samples, merge_tol, n_sys) else { return (None, 0.0) };
    if curve.params.mu == 0.0 {
        return (None, 0.0);
    }
    let (t0, t1) = (curve.times[i], curve.times[j]);
    let scale = curve.params.mu * n_sys;
    let (di, wi, dj, wj) = (curve.s_diag[i], curve.s_worm[i], curve.s_diag[j], curve.s_worm[j]);
    if distinct(di, wi, merge_tol, n_sys) && distinct(dj, wj, merge_tol, n_sys) {
        let a = di.unwrap() - wi.unwrap();
        let b = dj.unwrap() - wj.unwrap();
        let tc = t0 + (t1 - t0) * (-a) / (b - a);
        let sd = (dj.unwrap() - di.unwrap()) / (t1 - t0);
        let sw = (wj.unwrap() - wi.unwrap()) / (t1 - t0);
        return (Some(tc), ((sd - sw) / scale).abs());
    }
    let one_sided = |s: &Vec<Option<f64>>, a: usize, b: usize| -> Option<f64> {
        Some((s[b]? - s[a]?) / (curve.times[b] - curve.times[a]))
    };
    let sd = if i > 0 { one_sided(&curve.s_diag, i - 1, i) } else { None };
    let sw = if j + 1 < curve.times.len() { one_sided(&curve.s_worm, j, j + 1) } else { None };
    let gap = match (sd, sw) {
        (Some(a), Some(b)) => ((a - b) / scale).abs(),
        _ => 0.0,
    };
    (Some(0.5 * (t0 + t1)), gap)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalScanRow {
    pub mu: f64,
    pub slope_gap: f64,
    pub page_time: Option<f64>,
}

/// Slope gap versus `mu` with times given as multiples of `1 / mu`.
///
/// Each `mu` is an independent sweep; rows come back in the order of
/// `mu_list`.
pub fn critical_mu_scan(
    params: &ModelParams,
    mu_list: &[f64],
    mu_t_list: &[f64],
    settings: &PageCurveSettings,
) -> Result<Vec<CriticalScanRow>> {
    for &mu in mu_list {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParams(format!("scan needs positive mu, got {mu}")));
        }
    }
    mu_list
        .par_iter()
        .map(|&mu| {
            let p = params.with_mu(mu);
            let times: Vec<f64> = mu_t_list.iter().map(|x| x / mu).collect();
            let curve = page_curve(&p, &times, settings)?;
            Ok(CriticalScanRow { mu, slope_gap: curve.slope_gap, page_time: curve.page_time })
        })
        .collect()
}

/// Smallest `mu` whose gap falls below `eps_gap`.
pub fn estimate_critical_mu(rows: &[CriticalScanRow], eps_gap: f64) -> Option<f64> {
    let mut sorted: Vec<&CriticalScanRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    sorted.iter().find(|r| r.slope_gap < eps_gap).map(|r| r.mu)
}
