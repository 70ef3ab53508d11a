//! Gamma limit laws of the scaled urn.
//!
//! For a balanced tenable two-color process, `e^{-kt} (W(t), B(t))`
//! converges to `G * (w_white, w_blue)` where `G ~ Gamma(tau0 / k, k)` in
//! the scale parameterization. The limit is rank one: both coordinates are
//! multiples of the same Gamma variable.

mod gamma;

pub use gamma::{gamma_cdf, gamma_pdf, ln_gamma, regularized_lower};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment_engine::rising_factorial;
use crate::urn_model::{RandomizedRule, ReplacementRule, Rule};

/// Gamma law with shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMarginal {
    pub shape: f64,
    pub scale: f64,
}

impl GammaMarginal {
    pub fn pdf(&self, x: f64) -> f64 {
        gamma_pdf(x, self.shape, self.scale).unwrap_or(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_cdf(x.max(0.0), self.shape, self.scale).unwrap_or(f64::NAN)
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    /// `E[X^n] = scale^n <shape>_n`.
    pub fn moment(&self, n: u32) -> f64 {
        self.scale.powi(n as i32) * rising_factorial(self.shape, n)
    }
}

impl std::fmt::Display for GammaMarginal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Gamma({}, {})", self.shape, self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLimit {
    pub shape: f64,
    pub scale: f64,
    /// `(w_white, w_blue)`, nonnegative and summing to one.
    pub weights: (f64, f64),
}

impl GammaLimit {
    fn new(tau0: u64, k: f64, off_b: f64, off_c: f64) -> Result<Self> {
        let denom = off_b + off_c;
        if !(denom > 0.0) {
            return Err(Error::Degenerate(format!(
                "off-diagonal mass {denom} must be positive for a Gamma limit"
            )));
        }
        if tau0 == 0 {
            return Err(Error::Degenerate("initial urn is empty".into()));
        }
        Ok(Self {
            shape: tau0 as f64 / k,
            scale: k,
            weights: (off_c / denom, off_b / denom),
        })
    }

    pub fn white(&self) -> GammaMarginal {
        GammaMarginal {
            shape: self.shape,
            scale: self.scale * self.weights.0,
        }
    }

    pub fn blue(&self) -> GammaMarginal {
        GammaMarginal {
            shape: self.shape,
            scale: self.scale * self.weights.1,
        }
    }

    /// Limit of `E[W^i B^j] e^{-k(i+j)t}`: the `(i+j)`-th moment of the
    /// common Gamma variable times `w_white^i w_blue^j`.
    pub fn mixed_moment(&self, i: u32, j: u32) -> f64 {
        let n = i + j;
        self.weights.0.powi(i as i32)
            * self.weights.1.powi(j as i32)
            * self.scale.powi(n as i32)
            * rising_factorial(self.shape, n)
    }

    /// Balance factor encoded by the scale.
    pub fn k(&self) -> f64 {
        self.scale
    }
}

/// Limit for the Bagchi-Pal rule `((k-b, b), (c, k-c))`: weights
/// `(c, b) / (b + c)`.
pub fn bagchi_pal_limit(rule: &ReplacementRule, tau0: u64) -> Result<GammaLimit> {
    let k = rule
        .balance()
        .filter(|k| *k >= 1)
        .ok_or_else(|| Error::InvalidRule(format!("{rule:?} is not balanced")))?;
    GammaLimit::new(tau0, k as f64, rule.b as f64, rule.c as f64)
}

/// Limit for a randomized rule: weights `(k - mu_Z, k - mu_W)` normalized.
pub fn randomized_limit(rule: &RandomizedRule, tau0: u64) -> Result<GammaLimit> {
    let k = rule.k() as f64;
    GammaLimit::new(tau0, k, k - rule.mean_w(), k - rule.mean_z())
}

/// Randomized Play-the-Winner with success rates `p1`, `p2`: the white
/// weight is `q2 / (q1 + q2)`.
pub fn play_the_winner_limit(p1: f64, p2: f64, tau0: u64) -> Result<GammaLimit> {
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return Err(Error::Domain(format!("success rates must lie in [0, 1], got {p1}, {p2}")));
    }
    randomized_limit(&RandomizedRule::play_the_winner(p1, p2)?, tau0)
}

pub fn limit_for(rule: &Rule, tau0: u64) -> Result<GammaLimit> {
    match rule {
        Rule::Deterministic(r) => bagchi_pal_limit(r, tau0),
        Rule::Randomized(r) => randomized_limit(r, tau0),
    }
}
