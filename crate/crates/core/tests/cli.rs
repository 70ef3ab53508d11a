use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BAGCHI_PAL: &str = r#"mode = "deterministic"
matrix = [1, 3, 2, 2]
w0 = 3
b0 = 2
t_star = 2.0
replications = 500
seed = 20240501
"#;

fn polya(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polya"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = polya(&["simulate", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.toml"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = setup(&format!("{BAGCHI_PAL}colour = \"white\"\n"));
    let out = polya(&["limits", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
}

#[test]
fn order_above_cap_is_rejected() {
    let dir = setup(BAGCHI_PAL);
    let out = polya(&["moments", "--config", "run.toml", "--order", "7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("order cap 7"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn limits_prints_marginals() {
    let dir = setup(BAGCHI_PAL);
    let out = polya(&["limits", "--config", "run.toml"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Gamma(1.25, 1.6)"), "{text}");
    assert!(text.contains("Gamma(1.25, 2.4)"), "{text}");
}

#[test]
fn moments_csv_layout() {
    let dir = setup(BAGCHI_PAL);
    let out = polya(&["moments", "--config", "run.toml", "--order", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("out/moments.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,i,j,m,scaled_m");
    assert_eq!(lines.len(), 1 + 31 * 5);
    assert_eq!(lines[1], "0,1,0,3,3");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(&last[..3], &[3.0, 0.0, 2.0]);
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = setup(BAGCHI_PAL);
    let read = |out: &str| fs::read(dir.path().join(out).join("replicas.csv")).unwrap();
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let o = polya(&["simulate", "--config", "run.toml", "--replications", "50", "--out", out, "--threads", threads], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = polya(&["simulate", "--config", "run.toml", "--replications", "50", "--out", "c", "--seed", "1"], dir.path());
    assert!(o.status.success());
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let csv = String::from_utf8(read("a")).unwrap();
    assert!(csv.starts_with("replica,final_w,final_b,events,scaled_w,scaled_b\n"));
    assert_eq!(csv.lines().count(), 51);
    for line in csv.lines().skip(1) {
        let f: Vec<u64> = line.split(',').take(4).map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[1] + f[2], 5 + 4 * f[3]);
    }
}

#[test]
fn verify_writes_report_and_histogram() {
    let dir = setup(BAGCHI_PAL);
    let out = polya(&["verify", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["replications"], 500);
    assert_eq!(report["config"]["seed"], 20240501);
    assert!(report["version"].is_string());
    for key in ["proportion_white", "pearson_corr", "ks_white", "ks_blue", "moment_table", "pass_flags", "thresholds"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let hist = fs::read_to_string(dir.path().join("out/histogram.csv")).unwrap();
    assert!(hist.starts_with("color,bin_left,bin_right,count,density,gamma_pdf_mid\n"));
    let counts: usize = hist
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("white,"))
        .map(|l| l.split(',').nth(3).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 500);
    let leftovers: Vec<_> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = setup(BAGCHI_PAL);
    let out = polya(&["verify", "--config", "run.toml", "--t-star", "0.05"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FAIL proportion"), "{stdout}");
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn play_the_winner_verify_passes() {
    let dir = setup("mode = \"play_the_winner\"\nmatrix = [0.3, 0.6]\nw0 = 3\nb0 = 2\nt_star = 7.0\nseed = 11\n");
    let out = polya(&["verify", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
