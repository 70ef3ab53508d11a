//! Event-driven simulation of the Poissonized urn.
//!
//! Every ball carries a unit-rate exponential clock. By memorylessness the
//! superposition of `tau = W + B` clocks is a single exponential clock of
//! rate `tau`, and the ball that rings is uniform over the urn, so one event
//! costs two uniforms (three for randomized rules) regardless of urn size.
//!
//! Replica `i` of an ensemble draws from its own ChaCha8 stream seeded with
//! [`replica_seed`]`(master_seed, i)`, so results do not depend on how
//! replicas are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::urn_model::{DrawnColor, Rule};

/// Generator behind every replica stream.
pub type ReplicaRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub white: u64,
    pub blue: u64,
    pub time: f64,
}

impl UrnState {
    pub fn new(white: u64, blue: u64) -> Self {
        Self {
            white,
            blue,
            time: 0.0,
        }
    }

    pub fn total(&self) -> u64 {
        self.white + self.blue
    }

    pub fn proportion_white(&self) -> f64 {
        self.white as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rule: Rule,
    pub w0: u64,
    pub b0: u64,
    pub t_star: f64,
    pub replications: usize,
    pub master_seed: u64,
}

impl SimConfig {
    /// Checks the configuration and the rule against the starting urn.
    pub fn new(
        rule: impl Into<Rule>,
        w0: u64,
        b0: u64,
        t_star: f64,
        replications: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let rule = rule.into();
        if !(t_star > 0.0 && t_star.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_star must be positive and finite, got {t_star}")));
        }
        if replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if w0 + b0 == 0 {
            return Err(Error::InvalidConfig("initial urn must hold at least one ball".into()));
        }
        let report = rule.validate(w0, b0);
        if !report.is_ok() {
            return Err(Error::InvalidRule(report.diagnostics.join("; ")));
        }
        Ok(Self {
            rule,
            w0,
            b0,
            t_star,
            replications,
            master_seed,
        })
    }

    pub fn tau0(&self) -> u64 {
        self.w0 + self.b0
    }

    pub fn k(&self) -> i64 {
        self.rule.k()
    }

    pub fn initial_state(&self) -> UrnState {
        UrnState::new(self.w0, self.b0)
    }

    /// Expected number of ball additions by `t_star`: `tau0 (e^{k t*} - 1) / k`.
    pub fn expected_events(&self) -> f64 {
        let k = self.k() as f64;
        self.tau0() as f64 * (k * self.t_star).exp_m1() / k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub final_state: UrnState,
    pub events: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replications: usize,
    pub mean_events: f64,
    pub mean_white: f64,
    pub mean_blue: f64,
    pub mean_proportion_white: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub replicas: Vec<ReplicaResult>,
    pub summary: EnsembleSummary,
}

impl EnsembleResult {
    fn from_replicas(replicas: Vec<ReplicaResult>) -> Self {
        let n = replicas.len() as f64;
        let mean = |f: &dyn Fn(&ReplicaResult) -> f64| replicas.iter().map(f).sum::<f64>() / n;
        let summary = EnsembleSummary {
            replications: replicas.len(),
            mean_events: mean(&|r| r.events as f64),
            mean_white: mean(&|r| r.final_state.white as f64),
            mean_blue: mean(&|r| r.final_state.blue as f64),
            mean_proportion_white: mean(&|r| r.final_state.proportion_white()),
        };
        Self { replicas, summary }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replica `index`: the master seed advanced by `index + 1` golden
/// ratio increments, then mixed.
pub fn replica_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

pub fn replica_rng(seed: u64) -> ReplicaRng {
    ReplicaRng::seed_from_u64(seed)
}

/// Row 1 applies iff `u <= W / (W + B)`.
pub fn pick_color(state: &UrnState, u: f64) -> DrawnColor {
    if u * state.total() as f64 <= state.white as f64 {
        DrawnColor::White
    } else {
        DrawnColor::Blue
    }
}

/// Balls added `(white, blue)` when `color` is drawn. For randomized rules
/// the diagonal entry is drawn by inverse cdf from `u_entry`.
pub fn addition(rule: &Rule, color: DrawnColor, u_entry: f64) -> (i64, i64) {
    match rule {
        Rule::Deterministic(r) => r.row(color),
        Rule::Randomized(r) => {
            let k = r.k() as i64;
            match color {
                DrawnColor::White => {
                    let w = r.dist_w().quantile(u_entry) as i64;
                    (w, k - w)
                }
                DrawnColor::Blue => {
                    let z = r.dist_z().quantile(u_entry) as i64;
                    (k - z, z)
                }
            }
        }
    }
}

/// Applies an addition, rejecting any update that would make a count
/// negative.
pub fn apply_addition(state: &UrnState, add: (i64, i64)) -> Result<UrnState> {
    let white = state.white as i64 + add.0;
    let blue = state.blue as i64 + add.1;
    if white < 0 || blue < 0 {
        return Err(Error::Corruption {
            white,
            blue,
            time: state.time,
        });
    }
    Ok(UrnState {
        white: white as u64,
        blue: blue as u64,
        time: state.time,
    })
}

/// Waiting time to the next ring: `-ln(1 - u) / tau`, `u` in `[0, 1)`.
fn waiting_time(total: u64, u: f64) -> f64 {
    -(-u).ln_1p() / total as f64
}

fn draw_transition<R: Rng + ?Sized>(state: &UrnState, rule: &Rule, rng: &mut R) -> Result<UrnState> {
    let color = pick_color(state, rng.random());
    let u_entry = match rule {
        Rule::Deterministic(_) => 0.0,
        Rule::Randomized(_) => rng.random(),
    };
    apply_addition(state, addition(rule, color, u_entry))
}

/// Advances the urn by one event: waiting time, color pick, then ball
/// addition.
pub fn next_event<R: Rng + ?Sized>(state: &UrnState, rule: &Rule, rng: &mut R) -> Result<UrnState> {
    let dt = waiting_time(state.total(), rng.random());
    let mut next = draw_transition(state, rule, rng)?;
    next.time = state.time + dt;
    Ok(next)
}

/// A single sample path that can be advanced to successive horizons.
///
/// The next ring time is drawn once and held while it lies beyond the
/// current horizon, so observing a path at intermediate times does not
/// change its trajectory.
pub struct ReplicaPath<'a> {
    rule: &'a Rule,
    rng: ReplicaRng,
    state: UrnState,
    pending: Option<f64>,
    events: u64,
}

impl<'a> ReplicaPath<'a> {
    pub fn new(rule: &'a Rule, initial: UrnState, seed: u64) -> Self {
        Self {
            rule,
            rng: replica_rng(seed),
            state: initial,
            pending: None,
            events: 0,
        }
    }

    /// Executes every event with ring time `<= horizon` and returns the state
    /// stamped at `horizon`.
    pub fn advance_to(&mut self, horizon: f64) -> Result<UrnState> {
        loop {
            let ring = match self.pending {
                Some(t) => t,
                None => {
                    let t = self.state.time + waiting_time(self.state.total(), self.rng.random());
                    self.pending = Some(t);
                    t
                }
            };
            if ring > horizon {
                break;
            }
            self.pending = None;
            let mut next = draw_transition(&self.state, self.rule, &mut self.rng)?;
            next.time = ring;
            self.state = next;
            self.events += 1;
        }
        Ok(UrnState {
            time: horizon,
            ..self.state
        })
    }

    pub fn events(&self) -> u64 {
        self.events
    }
}

/// Runs one replica up to `t_star`. Events ringing after `t_star` are not
/// executed; the reported state is stamped at `t_star`.
pub fn run_replica(config: &SimConfig, seed: u64) -> Result<ReplicaResult> {
    let mut path = ReplicaPath::new(&config.rule, config.initial_state(), seed);
    let final_state = path.advance_to(config.t_star)?;
    Ok(ReplicaResult {
        final_state,
        events: path.events(),
        seed,
    })
}

/// States of one replica at each of `times` (nondecreasing, `<= t_star` not
/// required).
pub fn observe_replica(config: &SimConfig, seed: u64, times: &[f64]) -> Result<Vec<UrnState>> {
    let mut path = ReplicaPath::new(&config.rule, config.initial_state(), seed);
    times.iter().map(|&t| path.advance_to(t)).collect()
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replica {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs all replicas on the global rayon pool.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    let results: Vec<_> = (0..config.replications)
        .into_par_iter()
        .map(|i| run_replica(config, replica_seed(config.master_seed, i as u64)))
        .collect();
    Ok(EnsembleResult::from_replicas(first_error(results)?))
}

/// Same as [`run_ensemble`] on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(config: &SimConfig, threads: usize) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_ensemble(config))
}

/// Observes every replica of the ensemble at `times`; row `i` holds replica
/// `i`.
pub fn observe_ensemble(config: &SimConfig, times: &[f64]) -> Result<Vec<Vec<UrnState>>> {
    let results: Vec<_> = (0..config.replications)
        .into_par_iter()
        .map(|i| observe_replica(config, replica_seed(config.master_seed, i as u64), times))
        .collect();
    first_error(results)
}
