use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use moa_cli::commands::{run_all, summarize};
use moa_cli::output::{read_csv, read_jsonl, read_theorem_jsonl};
use moa_cli::parse_config;
use tempfile::TempDir;

fn moa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moa"))
        .args(args)
        .env("MOA_LOG", "off")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TWO_DIM: &str = r#"
[env]
kind = "custom"
reward_table = [[0.2, 0.9], [0.8, 0.1], [0.6, 0.6]]

[train]
strategies = ["moa_grpo"]
steps = 2
groups_per_step = 2
"#;

#[test]
fn run_two_steps_two_dims() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", TWO_DIM);
    let out = dir.path().join("r.csv");
    let o = moa(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "seed,strategy,step,mean_r_0,mean_r_1,w_0,w_1,pivot,retained,scalarized"
    );
    // The fixed header has 3 + 2D + 3 columns.
    assert!(lines.iter().all(|l| l.split(',').count() == 10));
}

#[test]
fn cartesian_row_count_and_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let body = r#"
[env]
kind = "conflict"

[train]
strategies = ["moa_grpo", "uniform_grpo"]
seeds = [4, 5, 6]
steps = 10
groups_per_step = 2
"#;
    let cfg_path = write_config(&dir, "c.toml", body);
    let csv_out = dir.path().join("r.csv");
    let json_out = dir.path().join("r.jsonl");
    assert!(moa(&[
        "run",
        "--config",
        &cfg_path,
        "--out",
        csv_out.to_str().unwrap()
    ])
    .status
    .success());
    let o = moa(&[
        "run",
        "--config",
        &cfg_path,
        "--out",
        json_out.to_str().unwrap(),
        "--format",
        "jsonl",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let from_csv = read_csv(fs::File::open(&csv_out).unwrap()).unwrap();
    let from_json =
        read_jsonl(std::io::BufReader::new(fs::File::open(&json_out).unwrap())).unwrap();
    assert_eq!(from_csv.len(), 60);

    let expected: Vec<_> = run_all(&parse_config(body).unwrap())
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    assert_eq!(from_json, expected);
    for (a, b) in from_csv.iter().zip(&expected) {
        assert_eq!(
            (a.seed, a.strategy, a.step, a.pivot),
            (b.seed, b.strategy, b.step, b.pivot)
        );
        assert!((a.scalarized - b.scalarized).abs() <= 5e-9 * b.scalarized.abs().max(1e-12));
    }
}

#[test]
fn seed_override_and_smoothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", TWO_DIM);
    let out = dir.path().join("r.csv");
    let o = moa(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "17",
        "--smooth",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert!(recs.iter().all(|r| r.seed == 17));
}

#[test]
fn unwritable_output_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", TWO_DIM);
    let bad = dir.path().join("missing").join("r.csv");
    let o = moa(&["run", "--config", &cfg, "--out", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot write"), "{}", stderr(&o));
}

#[test]
fn invalid_config_names_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.toml",
        "[env]\nkind = \"conflict\"\n[moa]\nbeta = -1.0\n",
    );
    let o = moa(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

fn theorem_config(dir: &TempDir, env: &str, betas: &str) -> (String, std::path::PathBuf) {
    let report = dir.path().join("theorem.jsonl");
    let body = format!(
        "[env]\n{env}\n[output]\nformat = \"jsonl\"\n[theorem]\nbetas = {betas}\nreport = \"{}\"\n",
        report.display()
    );
    (write_config(dir, "t.toml", &body), report)
}

#[test]
fn theorem_default_orthogonal_passes() {
    let dir = TempDir::new().unwrap();
    let (cfg, report) = theorem_config(&dir, "kind = \"orthogonal\"", "[0.01, 0.05, 0.5]");
    let o = moa(&["verify-theorem", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows =
        read_theorem_jsonl(std::io::BufReader::new(fs::File::open(report).unwrap())).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[..2]
        .iter()
        .all(|r| r.measured_gap > 0.0 && r.trials == 10_000));
}

#[test]
fn theorem_zero_temperature_passes() {
    let dir = TempDir::new().unwrap();
    let (cfg, report) = theorem_config(&dir, "kind = \"orthogonal\"", "[0.0]");
    assert!(moa(&["verify-theorem", "--config", &cfg]).status.success());
    let rows =
        read_theorem_jsonl(std::io::BufReader::new(fs::File::open(report).unwrap())).unwrap();
    assert_eq!(rows[0].measured_gap, 0.0);
}

#[test]
fn theorem_symmetric_env_flags_zero_covariance() {
    let dir = TempDir::new().unwrap();
    let (cfg, report) = theorem_config(
        &dir,
        "kind = \"orthogonal\"\ndeltas = [0.3, 0.3, 0.3, 0.3]",
        "[0.01, 0.05]",
    );
    let o = moa(&["verify-theorem", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(report).unwrap();
    assert!(text.lines().all(|l| l.contains("\"zero_covariance\":true")));
    assert!(text.contains("not_applicable"));
}

#[test]
fn theorem_rejects_conflict_env() {
    let dir = TempDir::new().unwrap();
    let (cfg, report) = theorem_config(&dir, "kind = \"conflict\"", "[0.01]");
    let o = moa(&["verify-theorem", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("orthogonal"), "{}", stderr(&o));
    assert!(!Path::new(&report).exists());
}

#[test]
fn theorem_failure_names_check() {
    let dir = TempDir::new().unwrap();
    // Few trials with heavy noise cannot land within tolerance.
    let body = "[env]\nkind = \"orthogonal\"\n[theorem]\nbetas = [0.01]\ntrials = 1\nsigma_xi_rel = 50.0\nseed = 3\n";
    let cfg = write_config(&dir, "t.toml", body);
    let o = moa(&["verify-theorem", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("check failed"), "{}", stderr(&o));
}

#[test]
fn compare_rejects_single_strategy() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.toml",
        "[env]\nkind = \"conflict\"\n[train]\nstrategies = [\"moa_grpo\"]\nseeds = [1, 2]\n",
    );
    let o = moa(&["compare", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("two strategies"), "{}", stderr(&o));
}

#[test]
fn compare_duplicate_strategy_rows_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.toml",
        "[env]\nkind = \"conflict\"\n[train]\nstrategies = [\"moa_mu\", \"moa_mu\", \"uniform_grpo\"]\nseeds = [1, 2]\nsteps = 20\ngroups_per_step = 2\n",
    );
    let o = moa(&["compare", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], lines[2]);
}

#[test]
fn compare_single_dimension_has_zero_auc_difference() {
    let body = "[env]\nkind = \"custom\"\nreward_table = [[0.1], [0.7], [0.4]]\n[train]\nstrategies = [\"moa_grpo\", \"uniform_grpo\"]\nseeds = [1, 2, 3]\nsteps = 40\ngroups_per_step = 2\n";
    let cfg = parse_config(body).unwrap();
    let runs = run_all(&cfg).unwrap();
    let s = summarize(&cfg.strategies, cfg.seeds.len(), &runs);
    for (a, b) in s[0].aucs.iter().zip(&s[1].aucs) {
        assert_eq!(a - b, 0.0);
    }
    assert_eq!(s[0].win_rate, Some(0.0));
}
