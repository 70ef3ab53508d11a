//! Replacement rules for two-color balanced urns.
//!
//! A deterministic rule is the integer matrix
//!
//! ```text
//!   | a  b |   drawn white: add a white, b blue
//!   | c  d |   drawn blue:  add c white, d blue
//! ```
//!
//! with balance factor `k = a + b = c + d`. A randomized rule replaces the
//! diagonal by random entries `W` and `Z` supported on `{0, ..., k}`, so the
//! rows `(W, k - W)` and `(k - Z, Z)` are balanced by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of an [`EntryDistribution`].
pub const PMF_TOLERANCE: f64 = 1e-12;

/// Which row of the replacement matrix applies: row 1 when a white ball is
/// drawn, row 2 when a blue one is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawnColor {
    White,
    Blue,
}

/// Outcome of rule validation. Failures are collected, not raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub balanced: bool,
    pub tenable: bool,
    pub diagnostics: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.balanced && self.tenable
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidRule(self.diagnostics.join("; ")))
        }
    }
}

/// Deterministic 2x2 ball-addition matrix.
///
/// Construction does not enforce balance; use [`validate_deterministic`] (or
/// [`ReplacementRule::validated`]) before simulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplacementRule {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl ReplacementRule {
    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self { a, b, c, d }
    }

    /// Bagchi-Pal form: rows `(k - b, b)` and `(c, k - c)`.
    pub const fn bagchi_pal(b: i64, c: i64, k: i64) -> Self {
        Self::new(k - b, b, c, k - c)
    }

    /// Builds and validates against the given starting composition.
    pub fn validated(a: i64, b: i64, c: i64, d: i64, w0: u64, b0: u64) -> Result<Self> {
        let rule = Self::new(a, b, c, d);
        validate_deterministic(&rule, w0, b0).into_result()?;
        Ok(rule)
    }

    /// Common row sum, if the rows agree.
    pub fn balance(&self) -> Option<i64> {
        let k = self.a + self.b;
        (k == self.c + self.d).then_some(k)
    }

    /// Balance factor. Only meaningful on a balanced rule; returns the first
    /// row sum otherwise.
    pub fn k(&self) -> i64 {
        self.a + self.b
    }

    pub fn row(&self, color: DrawnColor) -> (i64, i64) {
        match color {
            DrawnColor::White => (self.a, self.b),
            DrawnColor::Blue => (self.c, self.d),
        }
    }
}

/// Validates balance and tenability of a deterministic rule for a starting
/// composition `(w0, b0)`.
///
/// Tenability is the classical conservative predicate: off-diagonal entries
/// nonnegative, and a negative diagonal entry must divide both the initial
/// count of its color and every amount of that color the other row adds.
pub fn validate_deterministic(rule: &ReplacementRule, w0: u64, b0: u64) -> ValidationReport {
    let mut diagnostics = Vec::new();
    let ReplacementRule { a, b, c, d } = *rule;

    let balanced = match rule.balance() {
        Some(k) if k >= 1 => true,
        Some(k) => {
            diagnostics.push(format!("balance factor k = {k} must be at least 1"));
            false
        }
        None => {
            diagnostics.push(format!(
                "rows are not balanced: a + b = {} but c + d = {}",
                a + b,
                c + d
            ));
            false
        }
    };

    let mut tenable = true;
    if w0 + b0 == 0 {
        diagnostics.push("initial urn is empty".to_owned());
        tenable = false;
    }
    if b < 0 || c < 0 {
        diagnostics.push(format!("off-diagonal entries must be nonnegative (b = {b}, c = {c})"));
        tenable = false;
    }
    if a < 0 && !(divides(a, w0 as i64) && divides(a, c)) {
        diagnostics.push(format!(
            "negative entry a = {a} must divide w0 = {w0} and c = {c}"
        ));
        tenable = false;
    }
    if d < 0 && !(divides(d, b0 as i64) && divides(d, b)) {
        diagnostics.push(format!(
            "negative entry d = {d} must divide b0 = {b0} and b = {b}"
        ));
        tenable = false;
    }

    ValidationReport {
        balanced,
        tenable,
        diagnostics,
    }
}

fn divides(divisor: i64, value: i64) -> bool {
    divisor != 0 && value.rem_euclid(divisor.abs()) == 0
}

/// Finite distribution on `{0, ..., k}` for a random diagonal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    pmf: Vec<f64>,
}

impl EntryDistribution {
    /// Wraps a pmf indexed by value; `k` is `pmf.len() - 1`. Not validated.
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidDistribution("pmf must have at least one entry".into()));
        }
        Ok(Self { pmf })
    }

    pub fn bernoulli(p: f64) -> Self {
        Self { pmf: vec![1.0 - p, p] }
    }

    pub fn point_mass(k: u32, value: u32) -> Self {
        let mut pmf = vec![0.0; k as usize + 1];
        pmf[value as usize] = 1.0;
        Self { pmf }
    }

    pub fn uniform(k: u32) -> Self {
        let n = k as usize + 1;
        Self {
            pmf: vec![1.0 / n as f64; n],
        }
    }

    pub fn k(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        entry_mixed_moment(self, 1, 0)
    }

    /// Problems with the pmf, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some((v, p)) = self
            .pmf
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            out.push(format!("negative or non-finite mass {p} at value {v}"));
        }
        let total: f64 = self.pmf.iter().sum();
        if !((total - 1.0).abs() <= PMF_TOLERANCE) {
            out.push(format!("probabilities sum to {total}, not 1"));
        }
        out
    }

    /// Inverse-cdf draw from a uniform `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        for (v, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return v as u32;
            }
        }
        // Rounding can leave `acc` a hair below 1; fall back to the top of
        // the support that carries mass.
        self.pmf.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u32
    }
}

/// Randomized replacement rule with rows `(W, k - W)` and `(k - Z, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedRule {
    k: u32,
    dist_w: EntryDistribution,
    dist_z: EntryDistribution,
}

impl RandomizedRule {
    pub fn new(dist_w: EntryDistribution, dist_z: EntryDistribution) -> Result<Self> {
        if dist_w.k() != dist_z.k() {
            return Err(Error::InvalidDistribution(format!(
                "diagonal supports differ: k = {} vs k = {}",
                dist_w.k(),
                dist_z.k()
            )));
        }
        if dist_w.k() == 0 {
            return Err(Error::InvalidDistribution("balance factor k must be at least 1".into()));
        }
        Ok(Self {
            k: dist_w.k(),
            dist_w,
            dist_z,
        })
    }

    /// Randomized Play-the-Winner: treatment success rates `p1`, `p2`.
    pub fn play_the_winner(p1: f64, p2: f64) -> Result<Self> {
        Self::new(EntryDistribution::bernoulli(p1), EntryDistribution::bernoulli(p2))
    }

    /// Randomized rule whose entries are point masses at the deterministic
    /// diagonal. Requires `0 <= a, d <= k`.
    pub fn from_deterministic(rule: &ReplacementRule) -> Result<Self> {
        let k = rule
            .balance()
            .filter(|k| *k >= 1)
            .ok_or_else(|| Error::InvalidRule("rule is not balanced".into()))?;
        if !(0..=k).contains(&rule.a) || !(0..=k).contains(&rule.d) {
            return Err(Error::InvalidRule(
                "diagonal entries must lie in 0..=k for a randomized embedding".into(),
            ));
        }
        let k = k as u32;
        Self::new(
            EntryDistribution::point_mass(k, rule.a as u32),
            EntryDistribution::point_mass(k, rule.d as u32),
        )
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dist_w(&self) -> &EntryDistribution {
        &self.dist_w
    }

    pub fn dist_z(&self) -> &EntryDistribution {
        &self.dist_z
    }

    pub fn mean_w(&self) -> f64 {
        self.dist_w.mean()
    }

    pub fn mean_z(&self) -> f64 {
        self.dist_z.mean()
    }
}

pub fn validate_randomized(rule: &RandomizedRule) -> ValidationReport {
    let mut diagnostics = Vec::new();
    for (name, dist) in [("W", &rule.dist_w), ("Z", &rule.dist_z)] {
        diagnostics.extend(dist.problems().into_iter().map(|p| format!("{name}: {p}")));
    }
    let ok = diagnostics.is_empty();
    ValidationReport {
        balanced: ok,
        tenable: ok,
        diagnostics,
    }
}

/// `E[V^r (k - V)^s]` by summation over the support, with `0^0 = 1`.
pub fn entry_mixed_moment(dist: &EntryDistribution, r: u32, s: u32) -> f64 {
    let k = dist.k() as f64;
    dist.pmf
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let v = v as f64;
            p * v.powi(r as i32) * (k - v).powi(s as i32)
        })
        .sum()
}

/// `a^r b^s` for the white row, `c^r d^s` for the blue row.
pub fn deterministic_entry_moment(rule: &ReplacementRule, row: DrawnColor, r: u32, s: u32) -> f64 {
    let (left, right) = rule.row(row);
    (left as f64).powi(r as i32) * (right as f64).powi(s as i32)
}

/// Either kind of rule, as consumed by the simulator and the moment engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    Deterministic(ReplacementRule),
    Randomized(RandomizedRule),
}

impl Rule {
    pub fn k(&self) -> i64 {
        match self {
            Rule::Deterministic(r) => r.k(),
            Rule::Randomized(r) => r.k() as i64,
        }
    }

    pub fn validate(&self, w0: u64, b0: u64) -> ValidationReport {
        match self {
            Rule::Deterministic(r) => validate_deterministic(r, w0, b0),
            Rule::Randomized(r) => {
                let mut report = validate_randomized(r);
                if w0 + b0 == 0 {
                    report.tenable = false;
                    report.diagnostics.push("initial urn is empty".to_owned());
                }
                report
            }
        }
    }

    /// Mixed moment of the row added on a draw of `color`:
    /// `E[left^r * right^s]`.
    pub fn row_moment(&self, color: DrawnColor, r: u32, s: u32) -> f64 {
        match self {
            Rule::Deterministic(rule) => deterministic_entry_moment(rule, color, r, s),
            Rule::Randomized(rule) => match color {
                DrawnColor::White => entry_mixed_moment(&rule.dist_w, r, s),
                // Row 2 is (k - Z, Z): swap the roles of the exponents.
                DrawnColor::Blue => entry_mixed_moment(&rule.dist_z, s, r),
            },
        }
    }

    /// Effective off-diagonal pair `(b, c)`: the expected blue balls added on
    /// a white draw and white balls added on a blue draw.
    pub fn off_diagonal_means(&self) -> (f64, f64) {
        (
            self.row_moment(DrawnColor::White, 0, 1),
            self.row_moment(DrawnColor::Blue, 1, 0),
        )
    }
}

impl From<ReplacementRule> for Rule {
    fn from(rule: ReplacementRule) -> Self {
        Rule::Deterministic(rule)
    }
}

impl From<RandomizedRule> for Rule {
    fn from(rule: RandomizedRule) -> Self {
        Rule::Randomized(rule)
    }
}
