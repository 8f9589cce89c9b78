//! Discretized closed time contours for the replicated purity.
//!
//! Each replica is one closed loop. Its forward branch carries the ket of one
//! copy of the doubled system and runs over `u in [-t, t]`: the right-hand
//! system's evolution (`u < 0`, traversed from `-t` to `0`), then an
//! imaginary-time arc of length `beta/2`, then the left-hand system's evolution
//! (`u > 0`). The backward branch retraces `u` from `t` to `-t` with its own
//! `beta/2` arc at `u = 0`. Jumps pair equal-`u` points on branches of
//! opposite direction; for two replicas the pairing is `(a,+) <-> (b,-)` and
//! `(b,+) <-> (a,-)`, for one replica it is `(+) <-> (-)`.
//!
//! Real times are sampled at cell midpoints, so every point of a branch has
//! weight `dt = 2t / n_steps` and equal-time partners share the same slot.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Replica {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchLabel {
    pub replica: Replica,
    pub direction: Direction,
}

/// Weight `f(u)` multiplying the Hamiltonian along the contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourFactor {
    #[serde(rename = "+i")]
    PlusI,
    #[serde(rename = "-i")]
    MinusI,
    #[serde(rename = "1")]
    One,
}

impl ContourFactor {
    pub fn value(self) -> Complex64 {
        match self {
            ContourFactor::PlusI => Complex64::new(0.0, 1.0),
            ContourFactor::MinusI => Complex64::new(0.0, -1.0),
            ContourFactor::One => Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub index: usize,
    pub branch: BranchLabel,
    /// Real time `u` on real branches, imaginary time `tau` on arcs.
    pub time: f64,
    /// Real-time slot shared by jump partners; `None` on imaginary arcs.
    pub slot: Option<usize>,
    pub factor: ContourFactor,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub points: Vec<ContourPoint>,
    pub t: f64,
    #[serde(with = "crate::params::beta_serde")]
    pub beta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_imag: usize,
    pub replicas: usize,
    loop_len: usize,
    /// Jump partner of every real-time point.
    #[serde(skip)]
    partner: Vec<Option<usize>>,
}

/// Default number of imaginary points per `beta/2` arc.
pub fn default_imag_points(n_steps: usize) -> usize {
    (n_steps / 4).max(4)
}

impl ContourGrid {
    /// Two-replica contour for `Tr P^2`.
    pub fn new(params: &ModelParams, t: f64, n_steps: usize) -> Result<Self> {
        Self::build(params, t, n_steps, default_imag_points(n_steps), 2)
    }

    /// Single-replica contour for `Tr P`.
    pub fn single(params: &ModelParams, t: f64, n_steps: usize) -> Result<Self> {
        Self::build(params, t, n_steps, default_imag_points(n_steps), 1)
    }

    pub fn build(
        params: &ModelParams,
        t: f64,
        n_steps: usize,
        n_imag: usize,
        replicas: usize,
    ) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidParams(format!("n_steps must be >= 2, got {n_steps}")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParams(format!("t must be finite and >= 0, got {t}")));
        }
        if params.beta.is_infinite() {
            return Err(Error::Unsupported(
                "the contour requires finite beta; use the trajectory route for beta = inf".into(),
            ));
        }
        if !(params.beta >= 0.0) {
            return Err(Error::InvalidParams(format!("beta must be >= 0, got {}", params.beta)));
        }
        if replicas != 1 && replicas != 2 {
            return Err(Error::Unsupported(format!("{replicas} replicas")));
        }
        let with_arcs = params.beta > 0.0;
        if with_arcs && n_steps % 2 != 0 {
            return Err(Error::InvalidParams("n_steps must be even when beta > 0".into()));
        }
        if with_arcs && n_imag == 0 {
            return Err(Error::InvalidParams("n_imag must be positive when beta > 0".into()));
        }
        let n_imag = if with_arcs { n_imag } else { 0 };
        let dt = 2.0 * t / n_steps as f64;
        let dtau = if with_arcs { 0.5 * params.beta / n_imag as f64 } else { 0.0 };
        let slot_time = |k: usize| -t + (k as f64 + 0.5) * dt;

        let mut points = Vec::new();
        for r in 0..replicas {
            let replica = if r == 0 { Replica::A } else { Replica::B };
            let real = |direction, k: usize| ContourPoint {
                index: 0,
                branch: BranchLabel { replica, direction },
                time: slot_time(k),
                slot: Some(k),
                factor: if direction == Direction::Forward {
                    ContourFactor::PlusI
                } else {
                    ContourFactor::MinusI
                },
                weight: dt,
            };
            let arc = |j: usize| ContourPoint {
                index: 0,
                branch: BranchLabel { replica, direction: Direction::Imaginary },
                time: (j as f64 + 0.5) * dtau,
                slot: None,
                factor: ContourFactor::One,
                weight: dtau,
            };
            let half = n_steps / 2;
            if with_arcs {
                points.extend((0..half).map(|k| real(Direction::Forward, k)));
                points.extend((0..n_imag).map(arc));
                points.extend((half..n_steps).map(|k| real(Direction::Forward, k)));
                points.extend((half..n_steps).rev().map(|k| real(Direction::Backward, k)));
                points.extend((0..n_imag).map(arc));
                points.extend((0..half).rev().map(|k| real(Direction::Backward, k)));
            } else {
                points.extend((0..n_steps).map(|k| real(Direction::Forward, k)));
                points.extend((0..n_steps).rev().map(|k| real(Direction::Backward, k)));
            }
        }
        for (i, p) in points.iter_mut().enumerate() {
            p.index = i;
        }
        let loop_len = points.len() / replicas;

        let mut grid = Self {
            points,
            t,
            beta: params.beta,
            dt,
            n_steps,
            n_imag,
            replicas,
            loop_len,
            partner: Vec::new(),
        };
        grid.partner = grid.compute_partners();
        Ok(grid)
    }

    fn compute_partners(&self) -> Vec<Option<usize>> {
        use std::collections::HashMap;
        let mut by_key: HashMap<(Replica, Direction, usize), usize> = HashMap::new();
        for p in &self.points {
            if let Some(k) = p.slot {
                by_key.insert((p.branch.replica, p.branch.direction, k), p.index);
            }
        }
        self.points
            .iter()
            .map(|p| {
                let k = p.slot?;
                let other_dir = match p.branch.direction {
                    Direction::Forward => Direction::Backward,
                    Direction::Backward => Direction::Forward,
                    Direction::Imaginary => return None,
                };
                let other_rep = if self.replicas == 1 {
                    p.branch.replica
                } else if p.branch.replica == Replica::A {
                    Replica::B
                } else {
                    Replica::A
                };
                by_key.get(&(other_rep, other_dir, k)).copied()
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points on one replica loop.
    pub fn loop_len(&self) -> usize {
        self.loop_len
    }

    pub fn replica_of(&self, p: usize) -> usize {
        p / self.loop_len
    }

    pub fn partner(&self, p: usize) -> Option<usize> {
        self.partner.get(p).copied().flatten()
    }

    pub fn factor(&self, p: usize) -> Complex64 {
        self.points[p].factor.value()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn factors(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| p.factor.value()).collect()
    }

    /// Contour order: +1 if `p` comes after `q`, -1 if before, 0 if equal.
    pub fn contour_sign(&self, p: usize, q: usize) -> Result<i8> {
        let len = self.len();
        for idx in [p, q] {
            if idx >= len {
                return Err(Error::IndexOutOfRange { index: idx, len });
            }
        }
        Ok(match p.cmp(&q) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        })
    }

    /// Loop-local sign used by the free propagator: zero across replicas.
    pub fn loop_sign(&self, p: usize, q: usize) -> f64 {
        if self.replica_of(p) != self.replica_of(q) {
            return 0.0;
        }
        match p.cmp(&q) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => -1.0,
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// Indices of the real-time points of one branch, ordered by increasing `u`.
    pub fn branch_indices(&self, replica: Replica, direction: Direction) -> Vec<usize> {
        let mut idx: Vec<(usize, usize)> = self
            .points
            .iter()
            .filter(|p| p.branch.replica == replica && p.branch.direction == direction)
            .map(|p| (p.slot.unwrap_or(0), p.index))
            .collect();
        if direction != Direction::Imaginary {
            idx.sort();
        }
        idx.into_iter().map(|(_, i)| i).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64) -> ModelParams {
        ModelParams::new(8, 4, 1.0, 0.01, beta).unwrap()
    }

    #[test]
    fn infinite_temperature_grid_has_four_real_branches() {
        let g = ContourGrid::new(&params(0.0), 1.0, 100).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g.n_imag, 0);
        let mut labels = std::collections::HashSet::new();
        for p in &g.points {
            labels.insert(p.branch);
        }
        assert_eq!(labels.len(), 4);
        assert!(g.points.iter().all(|p| p.branch.direction != Direction::Imaginary));
    }

    #[test]
    fn zero_time_grid_is_degenerate_but_valid() {
        let g = ContourGrid::new(&params(0.0), 0.0, 2).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.points.iter().all(|p| p.time == 0.0 && p.weight == 0.0));
    }

    #[test]
    fn branch_weights_sum_to_branch_length() {
        let t = 1.7;
        let g = ContourGrid::build(&params(1.0), t, 100, 20, 2).unwrap();
        assert_eq!(g.len(), 400 + 4 * 20);
        for rep in [Replica::A, Replica::B] {
            for dir in [Direction::Forward, Direction::Backward] {
                let s: f64 = g.branch_indices(rep, dir).iter().map(|&i| g.points[i].weight).sum();
                assert!((s - 2.0 * t).abs() < 1e-12 * 2.0 * t);
            }
            let arcs: f64 = g
                .points
                .iter()
                .filter(|p| p.branch.replica == rep && p.branch.direction == Direction::Imaginary)
                .map(|p| p.weight)
                .sum();
            assert!((arcs - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn factors_follow_branch_direction() {
        let g = ContourGrid::build(&params(0.5), 1.0, 10, 3, 2).unwrap();
        let (mut fwd, mut bwd) = (0, 0);
        for p in &g.points {
            match (p.branch.direction, p.factor) {
                (Direction::Forward, ContourFactor::PlusI) => fwd += 1,
                (Direction::Backward, ContourFactor::MinusI) => bwd += 1,
                (Direction::Imaginary, ContourFactor::One) => {}
                other => panic!("inconsistent factor {other:?}"),
            }
        }
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn partners_pair_opposite_directions_at_equal_time() {
        for replicas in [1, 2] {
            let g = ContourGrid::build(&params(0.3), 2.0, 12, 3, replicas).unwrap();
            for p in &g.points {
                match g.partner(p.index) {
                    Some(o) => {
                        let o = &g.points[o];
                        assert_eq!(o.slot, p.slot);
                        assert_ne!(o.branch.direction, p.branch.direction);
                        if replicas == 2 {
                            assert_ne!(o.branch.replica, p.branch.replica);
                        }
                        assert_eq!(g.partner(o.index), Some(p.index));
                    }
                    None => assert_eq!(p.branch.direction, Direction::Imaginary),
                }
            }
        }
    }

    #[test]
    fn beta_infinite_is_rejected() {
        let err = ContourGrid::new(&params(f64::INFINITY), 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(ContourGrid::new(&params(0.0), -1.0, 10).is_err());
        assert!(ContourGrid::new(&params(0.0), 1.0, 1).is_err());
    }

    #[test]
    fn contour_sign_basics() {
        let g = ContourGrid::new(&params(0.0), 1.0, 10).unwrap();
        assert_eq!(g.contour_sign(3, 3).unwrap(), 0);
        assert_eq!(g.contour_sign(g.len() - 1, 0).unwrap(), 1);
        assert!(g.contour_sign(g.len(), 0).is_err());
    }

    #[test]
    fn json_encodes_factor_strings() {
        let g = ContourGrid::build(&params(0.5), 1.0, 4, 2, 1).unwrap();
        let s = g.to_json().unwrap();
        assert!(s.contains("\"+i\"") && s.contains("\"-i\"") && s.contains("\"1\""));
    }
}
