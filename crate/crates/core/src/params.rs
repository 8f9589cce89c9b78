//! Physical parameters shared by every route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a pair of q-body SYK models coupled to a Markovian bath.
///
/// `j` sets the coupling variance `(q-1)! J^2 / N^(q-1)`; `mu` is the rate
/// of the single-Majorana jump operators `sqrt(mu) chi_i` acting on both
/// sides; `beta` is the inverse temperature of the initial thermofield
/// double and may be `f64::INFINITY` (ground-state preparation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub q: usize,
    pub j: f64,
    pub mu: f64,
    #[serde(with = "beta_serde")]
    pub beta: f64,
}

impl ModelParams {
    pub fn new(n: usize, q: usize, j: f64, mu: f64, beta: f64) -> Result<Self> {
        let p = Self { n, q, j, mu, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidParams(format!("N must be even and >= 2, got {}", self.n)));
        }
        if self.q < 4 || self.q % 2 != 0 {
            return Err(Error::InvalidParams(format!("q must be even and >= 4, got {}", self.q)));
        }
        if !(self.j > 0.0) || !self.j.is_finite() {
            return Err(Error::InvalidParams(format!("J must be positive, got {}", self.j)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParams(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Large-q rescaled coupling `sqrt(q / 2^(q-1)) J`.
    pub fn j_cal(&self) -> f64 {
        (self.q as f64 / 2f64.powi(self.q as i32 - 1)).sqrt() * self.j
    }

    /// Large-q rescaled dissipation `q mu`.
    pub fn mu_hat(&self) -> f64 {
        self.q as f64 * self.mu
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

/// JSON has no infinity; an infinite beta travels as the string `"inf"`.
pub mod beta_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beta.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*beta)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
