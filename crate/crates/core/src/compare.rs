//! Pointwise comparison of saddle Green's functions with the large-q forms.
//!
//! Branch times are reported as `u in [0, 2t]`, i.e. the contour time shifted
//! by `t`, which is the convention of [`crate::largeq`].

use serde::{Deserialize, Serialize};

use crate::contour::{ContourGrid, Direction, Replica};
use crate::error::{Error, Result};
use crate::largeq::{equilibrium_g, short_time_g, twist_g, Eta, LargeQParams};
use crate::params::ModelParams;
use crate::saddle::{solve_saddle, SeedClass, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Replica-diagonal saddle against the perturbative inter-replica form
    /// and the undeformed intra-replica correlator.
    ShortTime,
    /// Wormhole saddle against the equilibrium correlator on `(b,+) u (a,-)`
    /// and the twist solution near the start of the branches.
    LongTime,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenDiffRow {
    /// Replica and branch labels, e.g. `ba+-` for `G(u^b_+, u'^a_-)`.
    pub component: String,
    pub u: f64,
    pub u2: f64,
    pub saddle: f64,
    pub large_q: f64,
}

impl GreenDiffRow {
    pub fn diff(&self) -> f64 {
        (self.saddle - self.large_q).abs()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenComparison {
    pub params: ModelParams,
    pub t: f64,
    pub n_steps: usize,
    pub regime: Regime,
    pub converged: bool,
    pub residual: f64,
    /// Largest imaginary part met on the compared points.
    pub max_imag: f64,
    pub rows: Vec<GreenDiffRow>,
}

impl GreenComparison {
    pub fn csv_header() -> &'static str {
        "component,u,u2,saddle,large_q,diff"
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.component,
                r.u,
                r.u2,
                r.saddle,
                r.large_q,
                r.diff()
            )?;
        }
        Ok(())
    }

    pub fn max_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.diff()).fold(0.0, f64::max)
    }

    /// Largest deviation per component, in order of first appearance.
    pub fn max_by_component(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(c, _)| *c == r.component) {
                Some((_, m)) => *m = m.max(r.diff()),
                None => out.push((r.component.clone(), r.diff())),
            }
        }
        out
    }
}

fn label(r: Replica) -> char {
    match r {
        Replica::A => 'a',
        Replica::B => 'b',
    }
}

fn sign(d: Direction) -> char {
    if d == Direction::Forward {
        '+'
    } else {
        '-'
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Solves the saddle of `regime` at time `t` and tabulates it against the
/// large-q expressions.
///
/// In the long-time regime the twist form is compared only for
/// `Jcal u, Jcal u' <= twist_window`, where the boundary solution applies.
pub fn compare_green(
    params: &ModelParams,
    t: f64,
    n_steps: usize,
    regime: Regime,
    twist_window: f64,
    settings: &SolverSettings,
) -> Result<GreenComparison> {
    if params.beta != 0.0 {
        return Err(Error::Unsupported("the large-q forms are given at beta = 0".into()));
    }
    let lp = LargeQParams::from_model(params)?;
    let grid = ContourGrid::new(params, t, n_steps)?;
    let class = match regime {
        Regime::ShortTime => SeedClass::Diagonal,
        Regime::LongTime => SeedClass::Wormhole,
    };
    let sol = solve_saddle(&grid, params, class, settings)?;
    let q = params.q as f64;
    let mut rows = Vec::new();
    let mut max_imag = 0.0f64;
    let branches = [
        (Replica::A, Direction::Forward),
        (Replica::A, Direction::Backward),
        (Replica::B, Direction::Forward),
        (Replica::B, Direction::Backward),
    ];
    for &(r1, d1) in &branches {
        for &(r2, d2) in &branches {
            let component = format!("{}{}{}{}", label(r1), label(r2), sign(d1), sign(d2));
            for &p in &grid.branch_indices(r1, d1) {
                for &s in &grid.branch_indices(r2, d2) {
                    if p == s {
                        continue;
                    }
                    let u = grid.points[p].time + t;
                    let u2 = grid.points[s].time + t;
                    let du = u - u2;
                    let want = match regime {
                        Regime::ShortTime => {
                            if r1 == r2 {
                                Some(0.5 * grid.loop_sign(p, s) / (lp.j_cal * du).cosh().powf(2.0 / q))
                            } else if r1 == Replica::B {
                                let eta = |d| if d == Direction::Forward { Eta::Plus } else { Eta::Minus };
                                Some(short_time_g(u, u2, t, eta(d1), eta(d2), &lp))
                            } else {
                                None
                            }
                        }
                        Regime::LongTime => match component.as_str() {
                            "ba+-" => Some(equilibrium_g(du, &lp)),
                            "ab-+" => Some(-equilibrium_g(du, &lp)),
                            "bb++" => Some(sgn(du) * equilibrium_g(du, &lp)),
                            "aa--" => Some(-sgn(du) * equilibrium_g(du, &lp)),
                            "aa-+" if lp.j_cal * u.max(u2) <= twist_window => Some(twist_g(u, u2, &lp)?),
                            _ => None,
                        },
                    };
                    if let Some(large_q) = want {
                        let g = sol.g.get(p, s);
                        max_imag = max_imag.max(g.im.abs());
                        rows.push(GreenDiffRow { component: component.clone(), u, u2, saddle: g.re, large_q });
                    }
                }
            }
        }
    }
    Ok(GreenComparison {
        params: *params,
        t,
        n_steps,
        regime,
        converged: sol.converged,
        residual: sol.residual,
        max_imag,
        rows,
    })
}
