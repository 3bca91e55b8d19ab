use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracfilter_cli::report::parse_csv;
use fracfilter_cli::{parse_config, Overrides};

const CONFIG: &str = r#"{
  "horizon": 3, "A": 0.8, "C": 0.1, "sigma": 1.0, "D": [1.0, -0.5, 0.7], "F": 0.0, "gamma": 0.6,
  "x0_mean": 0.2, "x0_var": 0.5, "hurst1": 0.7, "hurst2": 0.8,
  "weights": [0, 1, 2, 1], "seed": 4, "paths": 500,
  "gain": [0.3, 0.1, -0.2]
}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.json"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("c.json")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_fracfilter"))
            .args(args)
            .arg("--out")
            .arg(self.out())
            .output()
            .unwrap()
    }

    fn run_with_config(&self, args: &[&str]) -> Output {
        let mut all: Vec<&str> = args.to_vec();
        let c = self.config();
        let c = c.to_str().unwrap().to_string();
        all.push("--config");
        all.push(&c);
        self.run(&all)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn column(table: &fracfilter_cli::Table, name: &str) -> Vec<f64> {
    let idx = table.header().iter().position(|h| h == name).unwrap();
    table.rows().iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap()
}

#[test]
fn csv_headers_are_exact() {
    let sb = Sandbox::new(CONFIG);
    for cmd in ["optimize", "evaluate", "simulate", "gradcheck"] {
        assert_eq!(sb.run_with_config(&[cmd]).status.code(), Some(0), "{cmd}");
    }
    assert_eq!(sb.run(&["example", "--rho", "0.5", "--a1", "1", "--a2", "1"]).status.code(), Some(0));
    assert_eq!(first_line(&sb.read("evaluate.csv")), "k,K_closed,K_oracle,abs_diff");
    assert_eq!(first_line(&sb.read("optimize.csv")), "k,gamma,g_validated,g_paper");
    assert_eq!(first_line(&sb.read("optimize_summary.csv")), "J,residual,iterations,seed,converged,mode");
    assert_eq!(first_line(&sb.read("simulate.csv")), "k,K_analytic,K_empirical,se,mean_error");
    assert_eq!(first_line(&sb.read("example.csv")), "rho,a1,a2,root_index,gamma0,gamma1,poly_residual");
}

#[test]
fn cost_recomputes_from_covariance_column() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run_with_config(&["evaluate"]).status.code(), Some(0));
    let k = column(&parse_csv(&sb.read("evaluate.csv")), "K_oracle");
    let j = column(&parse_csv(&sb.read("evaluate_summary.csv")), "J")[0];
    let recomputed: f64 = [0.0, 1.0, 2.0, 1.0].iter().zip(&k).map(|(a, k)| a * k).sum();
    assert!((recomputed - j).abs() <= 1e-12 * j.abs().max(1.0), "{recomputed} vs {j}");

    assert_eq!(sb.run_with_config(&["optimize"]).status.code(), Some(0));
    let k = column(&parse_csv(&sb.read("optimize_covariance.csv")), "K_oracle");
    let j = column(&parse_csv(&sb.read("optimize_summary.csv")), "J")[0];
    let recomputed: f64 = [0.0, 1.0, 2.0, 1.0].iter().zip(&k).map(|(a, k)| a * k).sum();
    assert!((recomputed - j).abs() <= 1e-12 * j.abs().max(1.0), "{recomputed} vs {j}");
}

#[test]
fn json_report_embeds_reloadable_config() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run_with_config(&["optimize", "--format", "json", "--seed", "9", "--starts", "3"]).status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&sb.read("optimize.json")).unwrap();
    let echo = doc["config"].to_string();
    let reloaded = parse_config(&echo, &Overrides::default()).unwrap();
    assert_eq!(reloaded.echo.seed, 9);
    assert_eq!(reloaded.echo.optimizer.starts, 3);
    assert_eq!(reloaded.echo.paths, 500);
    let original = parse_config(CONFIG, &Overrides { seed: Some(9), starts: Some(3), ..Default::default() }).unwrap();
    assert_eq!(reloaded.echo, original.echo);
    assert_eq!(doc["starts"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_mode_writes_config_echo() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run_with_config(&["simulate", "--paths", "100"]).status.code(), Some(0));
    let echo = sb.read("simulate_config.json");
    let reloaded = parse_config(&echo, &Overrides::default()).unwrap();
    assert_eq!(reloaded.echo.paths, 100);
    assert_eq!(reloaded.echo.gain, Some(vec![0.3, 0.1, -0.2]));
}

#[test]
fn example_rows_satisfy_quintic() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run(&["example", "--rho", "0.5", "--a1", "1", "--a2", "1"]).status.code(), Some(0));
    let t = parse_csv(&sb.read("example.csv"));
    assert!(!t.rows().is_empty());
    for g in column(&t, "gamma0") {
        let p = g * (0.5 * g + 1.0f64).powi(2) + (0.5 + g) * (1.0 + g).powi(4);
        assert!(p.abs() <= 1e-9, "{g}: {p}");
    }
    assert!(column(&t, "poly_residual").iter().all(|r| *r <= 1e-9));
    let optima = parse_csv(&sb.read("example_optima.csv"));
    assert_eq!(optima.rows().len(), 1);
    assert_eq!(parse_csv(&sb.read("example_paths.csv")).rows().len(), 3);
}

#[test]
fn gradcheck_on_random_instance() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run(&["gradcheck", "--seed", "21"]).status.code(), Some(0));
    let t = parse_csv(&sb.read("gradcheck_summary.csv"));
    let err = column(&t, "max_rel_err_validated")[0];
    assert!(err <= 1e-5, "{err}");
    let rows = parse_csv(&sb.read("gradcheck.csv"));
    assert_eq!(rows.rows().len(), 6);
}

#[test]
fn noise_table_and_paths() {
    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run(&["noise", "--hurst", "0.75", "--lags", "3", "--samples", "2", "--length", "5"]).status.code(), Some(0));
    let t = parse_csv(&sb.read("noise.csv"));
    let rho = column(&t, "rho");
    assert_eq!(rho.len(), 4);
    assert_eq!(rho[0], 1.0);
    assert!((rho[1] - 0.4142135623730951).abs() < 1e-15);
    assert_eq!(parse_csv(&sb.read("noise_paths.csv")).rows().len(), 10);
    // hurst values from a config
    assert_eq!(sb.run_with_config(&["noise"]).status.code(), Some(0));
    assert_eq!(parse_csv(&sb.read("noise.csv")).rows().len(), 2 * 33);
}

#[test]
fn validation_errors_exit_one() {
    let sb = Sandbox::new(&CONFIG.replace("\"hurst1\": 0.7", "\"hurst1\": 0.3"));
    let out = sb.run_with_config(&["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Hurst must lie in [1/2, 1)"), "{err}");
    assert!(!sb.out().join("evaluate.csv").exists());

    let sb = Sandbox::new(&CONFIG.replace("\"horizon\": 3,", ""));
    let out = sb.run_with_config(&["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));

    let sb = Sandbox::new(CONFIG);
    assert_eq!(sb.run(&["evaluate"]).status.code(), Some(1));
    assert_eq!(sb.run(&["evaluate", "--config", "/nonexistent/c.json"]).status.code(), Some(1));
    assert_eq!(sb.run(&["example", "--a1", "1"]).status.code(), Some(1));
    assert_eq!(sb.run(&["example", "--rho", "1.5"]).status.code(), Some(1));
    assert_eq!(sb.run_with_config(&["optimize", "--mode", "other"]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two_with_reports() {
    let sb = Sandbox::new(CONFIG);
    let out = sb.run_with_config(&["optimize", "--max-iters", "1", "--starts", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let summary = parse_csv(&sb.read("optimize_summary.csv"));
    assert_eq!(summary.rows()[0][4], "false");
}

#[test]
fn outputs_are_reproducible() {
    let a = Sandbox::new(CONFIG);
    let b = Sandbox::new(CONFIG);
    for sb in [&a, &b] {
        assert_eq!(sb.run_with_config(&["simulate", "--seed", "8"]).status.code(), Some(0));
    }
    assert_eq!(a.read("simulate.csv"), b.read("simulate.csv"));
    let c = Sandbox::new(CONFIG);
    assert_eq!(c.run_with_config(&["simulate", "--seed", "9"]).status.code(), Some(0));
    assert_ne!(a.read("simulate.csv"), c.read("simulate.csv"));
}

#[test]
fn help_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_fracfilter")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(Path::new(env!("CARGO_BIN_EXE_fracfilter")).exists());
}
