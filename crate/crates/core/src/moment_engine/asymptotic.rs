use serde::{Deserialize, Serialize};

use super::combinatorics::{rising_factorial, stirling2};
use crate::error::{Error, Result};
use crate::urn_model::{RandomizedRule, Rule};

/// Exact `E[tau(t)^n]` for the total ball count of a balanced urn:
///
/// ```text
/// k^n sum_{i=1}^{n} (-1)^{n-i} S(n,i) <tau0/k>_i e^{k i t}
/// ```
pub fn total_moment(tau0: u64, k: i64, n: u32, t: f64) -> f64 {
    let kf = k as f64;
    let x = tau0 as f64 / kf;
    let sum: f64 = (1..=n)
        .map(|i| {
            let sign = if (n - i) % 2 == 0 { 1.0 } else { -1.0 };
            sign * stirling2(n, i) as f64 * rising_factorial(x, i) * (kf * i as f64 * t).exp()
        })
        .sum();
    kf.powi(n as i32) * sum
}

/// Leading coefficient `K_{i,j} = lim m_{i,j}(t) e^{-k(i+j)t}` for the
/// Bagchi-Pal rule with off-diagonals `b`, `c`:
///
/// ```text
/// b^j c^i / (b + c)^{i+j} * k^{i+j} <tau0/k>_{i+j}
/// ```
pub fn asymptotic_k(i: u32, j: u32, b: i64, c: i64, k: i64, tau0: u64) -> Result<f64> {
    if b + c <= 0 {
        return Err(Error::Degenerate(format!(
            "b + c = {} leaves the leading coefficients undefined",
            b + c
        )));
    }
    Ok(leading(i, j, b as f64, c as f64, k as f64, tau0))
}

/// Randomized analogue `M_{i,j}`: `b` and `c` are replaced by the mean
/// off-diagonals `k - mu_W` and `k - mu_Z`.
pub fn asymptotic_m(i: u32, j: u32, rule: &RandomizedRule, tau0: u64) -> Result<f64> {
    let k = rule.k() as f64;
    let (b, c) = (k - rule.mean_w(), k - rule.mean_z());
    if !(b + c > 0.0) {
        return Err(Error::Degenerate(format!(
            "2k - mu_W - mu_Z = {} leaves the leading coefficients undefined",
            b + c
        )));
    }
    Ok(leading(i, j, b, c, k, tau0))
}

fn leading(i: u32, j: u32, b: f64, c: f64, k: f64, tau0: u64) -> f64 {
    let n = i + j;
    b.powi(j as i32) * c.powi(i as i32) / (b + c).powi(n as i32)
        * k.powi(n as i32)
        * rising_factorial(tau0 as f64 / k, n)
}

/// `K_{i,j}` or `M_{i,j}` depending on the rule kind.
pub fn leading_coefficient(rule: &Rule, i: u32, j: u32, tau0: u64) -> Result<f64> {
    match rule {
        Rule::Deterministic(r) => asymptotic_k(i, j, r.b, r.c, r.k(), tau0),
        Rule::Randomized(r) => asymptotic_m(i, j, r, tau0),
    }
}

/// Leading coefficients of every moment of one order, ordered
/// `(n,0), (n-1,1), ..., (0,n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCoefficients {
    pub order: u32,
    pub entries: Vec<((u32, u32), f64)>,
}

pub fn asymptotic_coefficients(rule: &Rule, tau0: u64, order: u32) -> Result<AsymptoticCoefficients> {
    let entries = (0..=order)
        .map(|j| {
            let i = order - j;
            leading_coefficient(rule, i, j, tau0).map(|v| ((i, j), v))
        })
        .collect::<Result<_>>()?;
    Ok(AsymptoticCoefficients { order, entries })
}
