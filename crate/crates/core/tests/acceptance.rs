//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use polya::cli::{cmd_simulate, Overrides, RunConfig, RunConfigFile};
use polya::limit_theory::{bagchi_pal_limit, gamma_cdf, randomized_limit, GammaMarginal};
use polya::moment_engine::{
    asymptotic_k, binomial, build_an, build_moment_ode, eigenvalues_an, moment_indices,
    solve_moments, solve_moments_with, total_moment, SolveOptions,
};
use polya::process_sim::{observe_ensemble, run_ensemble, SimConfig};
use polya::stats_verify::{
    empirical_moment, ks_statistic, pearson_correlation, proportion_white, scaled_samples,
};
use polya::urn_model::{EntryDistribution, RandomizedRule, ReplacementRule, Rule};

const SEED: u64 = 20240501;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn rising(x: f64, n: u32) -> f64 {
    (0..n).map(|r| x + r as f64).product()
}

fn bagchi_pal_config(replications: usize) -> SimConfig {
    SimConfig::new(ReplacementRule::new(1, 3, 2, 2), 3, 2, 2.0, replications, SEED).unwrap()
}

fn criterion_1() -> Outcome {
    let config = bagchi_pal_config(500);
    let ens = run_ensemble(&config).unwrap();
    let pairs = scaled_samples(&ens, 4.0, 2.0);
    let prop = proportion_white(&ens);
    let corr = pearson_correlation(&pairs).unwrap();
    let crit = 1.63 / 500f64.sqrt();
    let white: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let blue: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ks_w = ks_statistic(&white, |x| gamma_cdf(x, 1.25, 1.6).unwrap()).statistic;
    let ks_b = ks_statistic(&blue, |x| gamma_cdf(x, 1.25, 2.4).unwrap()).statistic;
    let passed = (prop - 0.4).abs() <= 0.01 && corr >= 0.999 && ks_w < crit && ks_b < crit;
    Outcome::new(
        passed,
        format!("proportion {prop:.5} (target 0.4 +/- 0.01), corr {corr:.6} (>= 0.999), KS white {ks_w:.4} blue {ks_b:.4} (< {crit:.4})"),
    )
}

fn criterion_2() -> Outcome {
    let rule = RandomizedRule::play_the_winner(0.3, 0.6).unwrap();
    let config = SimConfig::new(rule, 3, 2, 7.0, 500, SEED).unwrap();
    let ens = run_ensemble(&config).unwrap();
    let pairs = scaled_samples(&ens, 1.0, 7.0);
    let prop = proportion_white(&ens);
    let corr = pearson_correlation(&pairs).unwrap();
    let target = 0.4 / (0.4 + 0.7);
    let passed = (prop - target).abs() <= 0.02 && corr >= 0.995;
    Outcome::new(
        passed,
        format!("proportion {prop:.5} (target {target:.5} +/- 0.02), corr {corr:.6} (>= 0.995)"),
    )
}

fn criterion_3() -> Outcome {
    let ens = run_ensemble(&bagchi_pal_config(500)).unwrap();
    let expected = 5.0 * (8f64.exp() - 1.0) / 4.0;
    let mean = ens.summary.mean_events;
    let r = rel(mean, expected);
    Outcome::new(r <= 0.03, format!("mean events {mean:.1} vs {expected:.1} (rel {r:.4}, tol 0.03)"))
}

fn criterion_4() -> Outcome {
    let times = [0.25, 0.5, 1.0];
    let rules: [(&str, Rule); 2] = [
        ("bagchi-pal", ReplacementRule::new(1, 3, 2, 2).into()),
        ("play-the-winner", RandomizedRule::play_the_winner(0.3, 0.6).unwrap().into()),
    ];
    let mut worst = 0.0f64;
    let mut checks = 0;
    for (_, rule) in &rules {
        let config = SimConfig::new(rule.clone(), 3, 2, 1.0, 10_000, SEED).unwrap();
        let paths = observe_ensemble(&config, &times).unwrap();
        let traj = solve_moments(&build_moment_ode(rule, 4, 3, 2).unwrap(), &[0.0, 0.25, 0.5, 1.0]).unwrap();
        for (t_idx, _) in times.iter().enumerate() {
            let pairs: Vec<(f64, f64)> = paths
                .iter()
                .map(|p| (p[t_idx].white as f64, p[t_idx].blue as f64))
                .collect();
            for &(i, j) in &traj.index {
                let est = empirical_moment(&pairs, i, j).unwrap();
                let z = (est.estimate - traj.raw(i, j, t_idx + 1)) / est.std_error;
                worst = worst.max(z.abs());
                checks += 1;
            }
        }
    }
    Outcome::new(worst <= 3.0, format!("{checks} moments, max |z| = {worst:.3} (<= 3 jackknife SE)"))
}

/// Eigenvalues of a tridiagonal matrix through its symmetric similarity
/// transform; the characteristic polynomial only sees off-diagonal products.
fn tridiagonal_spectrum(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut s = DMatrix::zeros(n, n);
    for p in 0..n {
        s[(p, p)] = a[(p, p)];
        if p + 1 < n {
            let e = (a[(p, p + 1)] * a[(p + 1, p)]).sqrt();
            s[(p, p + 1)] = e;
            s[(p + 1, p)] = e;
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in 1..=6i64 {
        for b in 0..=k {
            for c in 0..=k {
                if b + c < 1 {
                    continue;
                }
                for n in 1..=6u32 {
                    let numeric = tridiagonal_spectrum(&build_an(n, b, c, k));
                    let mut expected: Vec<f64> =
                        (0..=n as i64).map(|s| (n as i64 * k - s * (b + c)) as f64).collect();
                    expected.sort_by(|x, y| y.total_cmp(x));
                    let closed = eigenvalues_an(n, b, c, k);
                    for ((x, y), z) in numeric.iter().zip(&expected).zip(&closed) {
                        worst = worst.max((x - y).abs()).max((z - y).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-8 && secs < 1.0,
        format!("{cases} blocks, max deviation {worst:.2e} (<= 1e-8), {secs:.3} s (< 1 s)"),
    )
}

fn criterion_6() -> Outcome {
    let grid: Vec<f64> = (0..=15).map(|i| i as f64 / 10.0).collect();
    let rules: [Rule; 2] = [
        ReplacementRule::new(1, 3, 2, 2).into(),
        RandomizedRule::play_the_winner(0.3, 0.6).unwrap().into(),
    ];
    let (mut worst_n, mut worst_mean) = (0.0f64, 0.0f64);
    for rule in &rules {
        let k = rule.k();
        let traj = solve_moments(&build_moment_ode(rule, 4, 3, 2).unwrap(), &grid).unwrap();
        for (t_idx, &t) in grid.iter().enumerate() {
            for n in 1..=4u32 {
                let sum: f64 = (0..=n)
                    .map(|i| binomial(n, i) * traj.raw(i, n - i, t_idx))
                    .sum();
                worst_n = worst_n.max(rel(sum, total_moment(5, k, n, t)));
            }
            let mean = traj.raw(1, 0, t_idx) + traj.raw(0, 1, t_idx);
            worst_mean = worst_mean.max(rel(mean, 5.0 * (k as f64 * t).exp()));
        }
    }
    // Hand expansion of the second total moment for tau0 = 5, k = 4.
    let hand = 45.0 * 4f64.exp() - 20.0 * 2f64.exp();
    let hand_ok = rel(total_moment(5, 4, 2, 0.5), hand) < 1e-13;
    Outcome::new(
        worst_n <= 1e-7 && worst_mean <= 1e-8 && hand_ok,
        format!("binomial sums rel {worst_n:.2e} (<= 1e-7), E[W]+E[B] rel {worst_mean:.2e} (<= 1e-8)"),
    )
}

fn criterion_7() -> Outcome {
    let rule = Rule::from(ReplacementRule::new(1, 3, 2, 2));
    let traj = solve_moments_with(
        &build_moment_ode(&rule, 2, 3, 2).unwrap(),
        &[0.0, 3.0],
        SolveOptions { scaled: true, ..Default::default() },
    )
    .unwrap();
    let (b, c, k) = (3.0f64, 2.0f64, 4.0f64);
    let oracle = |i: u32, j: u32| {
        let n = i + j;
        b.powi(j as i32) * c.powi(i as i32) / (b + c).powi(n as i32) * k.powi(n as i32) * rising(1.25, n)
    };
    let mut conv = 0.0f64;
    for (i, j) in moment_indices(2) {
        let kk = asymptotic_k(i, j, 3, 2, 4, 5).unwrap();
        conv = conv.max((traj.value(i, j, 1) - kk).abs()).max((kk - oracle(i, j)).abs());
    }
    let mut law = 0.0f64;
    for (b, c, k, tau0) in [(3i64, 2i64, 4i64, 5u64), (1, 1, 2, 3), (2, 5, 6, 7), (0, 3, 3, 2), (4, 0, 5, 1)] {
        let kk = |i: u32, j: u32| asymptotic_k(i, j, b, c, k, tau0).unwrap();
        let (bf, cf) = (b as f64, c as f64);
        for n in 1..=6u32 {
            for i in 1..n {
                let (i_f, n_f) = (i as f64, n as f64);
                let lhs = (n_f * cf + i_f * bf - i_f * cf) * kk(i, n - i);
                let rhs = (n_f - i_f) * bf * kk(i + 1, n - i - 1) + i_f * cf * kk(i - 1, n - i + 1);
                law = law.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
            }
            if b > 0 {
                for i in 0..=n {
                    let lhs = kk(i, n - i);
                    let rhs = (cf / bf).powi(i as i32) * kk(0, n);
                    law = law.max((lhs - rhs).abs() / lhs.abs().max(1.0));
                }
            }
        }
    }
    Outcome::new(
        conv <= 1e-3 && law <= 1e-12,
        format!("max |scaled m - K| at t=3: {conv:.2e} (<= 1e-3), recurrence/ratio rel {law:.2e} (<= 1e-12)"),
    )
}

fn criterion_8() -> Outcome {
    let mut same = true;
    for (b, c, k) in [(3, 2, 4), (0, 1, 1), (2, 2, 2), (1, 5, 6), (6, 6, 6)] {
        let det = ReplacementRule::bagchi_pal(b, c, k);
        let rnd = RandomizedRule::new(EntryDistribution::point_mass(k as u32, (k - b) as u32), EntryDistribution::point_mass(k as u32, (k - c) as u32)).unwrap();
        same &= randomized_limit(&rnd, 5).unwrap() == bagchi_pal_limit(&det, 5).unwrap();
    }
    let lim = bagchi_pal_limit(&ReplacementRule::new(1, 3, 2, 2), 5).unwrap();
    let white = GammaMarginal { shape: lim.shape, scale: lim.scale * lim.weights.0 };
    let mut worst = 0.0f64;
    for n in 1..=6 {
        let bridge = (lim.scale * lim.weights.0).powi(n as i32) * rising(lim.shape, n);
        let k = asymptotic_k(n, 0, 3, 2, 4, 5).unwrap();
        worst = worst.max(rel(bridge, k)).max(rel(white.moment(n), k));
    }
    Outcome::new(
        same && worst <= 1e-12,
        format!("point masses agree: {same}, moment bridge rel {worst:.2e} (<= 1e-12)"),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let file: RunConfigFile = toml::from_str(&format!(
        "mode = \"deterministic\"\nmatrix = [1, 3, 2, 2]\nw0 = 3\nb0 = 2\nt_star = 2.0\nreplications = 200\nseed = {SEED}\n"
    ))
    .unwrap();
    let run = |name: &str, threads: Option<usize>| -> Vec<u8> {
        let overrides = Overrides { out: Some(dir.path().join(name)), ..Default::default() };
        let config = RunConfig::from_file(file.clone(), &overrides).unwrap();
        let path: PathBuf = cmd_simulate(&config, threads).unwrap();
        fs::read(path).unwrap()
    };
    let reference = run("a", None);
    let runs = [run("b", None), run("c", Some(1)), run("d", Some(3)), run("e", Some(8))];
    let identical = runs.iter().all(|r| *r == reference);
    Outcome::new(
        identical && !reference.is_empty(),
        format!("{} bytes; repeat run and 1/3/8 threads identical: {identical}", reference.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 bagchi-pal reproduction", criterion_1),
        ("2 play-the-winner reproduction", criterion_2),
        ("3 event-count law", criterion_3),
        ("4 moment oracle vs monte-carlo", criterion_4),
        ("5 spectrum sweep", criterion_5),
        ("6 conservation identities", criterion_6),
        ("7 asymptotic coefficients", criterion_7),
        ("8 limit-law consistency", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = check();
        if !outcome.passed {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
