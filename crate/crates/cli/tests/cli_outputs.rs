use std::path::{Path, PathBuf};
use std::process::Command;

use uavfl_cli::{cmd_fig3, cmd_fl, cmd_outage, CsvReport, ExperimentConfig, Outcome};

const TINY_OUTAGE: &str = r#"
seeds = [7]
[sweep]
ratios = [10, 100, 300]
[mc]
trials = 2000
"#;

const TINY_FL: &str = r#"
seeds = [3, 4]
[fl]
rounds = 4
[sweep]
p_out = [0.0, 0.5]
clients = [10]
partitions = ["noniid"]
"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, report: &CsvReport) {
    let path = golden_path(name);
    let got = report.render();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(got, want, "{name} differs from the golden file");
}

fn cell(r: &CsvReport, row: usize, col: &str) -> String {
    r.rows[row][r.column(col).unwrap()].clone()
}

#[test]
fn outage_matches_golden() {
    let o = cmd_outage(&config(TINY_OUTAGE)).unwrap();
    assert_eq!(o.failed, 0);
    assert_eq!(o.report.header, uavfl_cli::commands::OUTAGE_COLUMNS);
    check_golden("outage.csv", &o.report);
}

#[test]
fn fl_matches_golden() {
    let o = cmd_fl(&config(TINY_FL)).unwrap();
    assert_eq!(o.failed, 0);
    assert_eq!(o.report.rows.len(), 4);
    assert_eq!(o.extra.len(), 4);
    check_golden("fl.csv", &o.report);
    let (rel, trace) = &o.extra[0];
    assert_eq!(rel, Path::new("traces/fl_noniid_k10_p0_seed3.csv"));
    assert_eq!(trace.header, uavfl_cli::commands::TRACE_COLUMNS);
    check_golden("fl_trace.csv", trace);
}

#[test]
fn zero_trials_leave_mc_columns_empty() {
    let mut cfg = config(TINY_OUTAGE);
    cfg.mc.trials = 0;
    let o = cmd_outage(&cfg).unwrap();
    assert_eq!(o.failed, 0);
    assert_eq!(o.report.rows.len(), 3);
    for i in 0..3 {
        assert!(cell(&o.report, i, "p_out_mc").is_empty());
        assert!(cell(&o.report, i, "mc_halfwidth").is_empty());
        assert!(cell(&o.report, i, "p_out_analytical").parse::<f64>().is_ok());
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let outage = config(TINY_OUTAGE);
    let fl = config(TINY_FL);
    let render = |o: Outcome| {
        let mut all = vec![o.report.render()];
        all.extend(o.extra.iter().map(|(_, r)| r.render()));
        all
    };
    let a = with_threads(1, || {
        (render(cmd_outage(&outage).unwrap()), render(cmd_fl(&fl).unwrap()))
    });
    let b = with_threads(4, || {
        (render(cmd_outage(&outage).unwrap()), render(cmd_fl(&fl).unwrap()))
    });
    assert_eq!(a, b);
}

#[test]
fn full_outage_reports_untrained_accuracy() {
    let mut cfg = config(TINY_FL);
    cfg.fl.rounds = 30;
    cfg.sweep.p_out = vec![uavfl::fl::OutageSpec::Probability(1.0)];
    let o = cmd_fl(&cfg).unwrap();
    for (i, (_, trace)) in o.extra.iter().enumerate() {
        let initial = trace
            .footer
            .iter()
            .find(|(k, _)| k == "initial_accuracy")
            .unwrap()
            .1
            .clone();
        assert_eq!(cell(&o.report, i, "final_accuracy"), initial);
        assert!(trace.rows.iter().all(|r| r[3] == "false"));
    }
}

#[test]
fn single_ratio_fig3_runs_both_pipelines() {
    let cfg = config(
        r#"
seeds = [2]
[fl]
num_clients = 10
rounds = 3
[sweep]
ratios = [100]
p_out = [0.5, 0.8]
"#,
    );
    let o = cmd_fig3(&cfg).unwrap();
    assert_eq!(o.failed, 0);
    assert_eq!(o.report.rows.len(), 1);
    for col in ["p_out_analytical", "p_out_empirical", "acc_simulated", "acc_analytical"] {
        assert!(cell(&o.report, 0, col).parse::<f64>().is_ok(), "{col}");
    }
    assert!(o.report.footer.iter().any(|(k, _)| k == "mean_abs_gap"));
}

#[test]
fn fig3_lookup_outside_grid_is_a_row_error() {
    let cfg = config(
        r#"
seeds = [2]
[fl]
num_clients = 10
rounds = 2
[sweep]
ratios = [100]
p_out = [0.0, 0.3]
"#,
    );
    let o = cmd_fig3(&cfg).unwrap();
    assert_eq!(o.failed, 1);
    assert!(cell(&o.report, 0, "acc_analytical").is_empty());
    assert!(!cell(&o.report, 0, "acc_simulated").is_empty());
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "seedz = [1]",
        "[network]\nlamda_u = 1e-5",
        "[fl]\nrounds = 3\nepochs = 2",
    ] {
        assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
    }
}

#[test]
fn footer_carries_provenance() {
    let cfg = config(TINY_OUTAGE);
    let o = cmd_outage(&cfg).unwrap();
    let keys: Vec<&str> = o.report.footer.iter().map(|(k, _)| k.as_str()).collect();
    assert!(keys.ends_with(&["config_sha256", "seeds", "version"]));
    assert_eq!(o.report.footer[keys.len() - 3].1, cfg.hash());
    assert_eq!(o.report.footer[keys.len() - 2].1, "7");
}

fn run_bin(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_uavfl"))
        .current_dir(dir)
        .env_remove("UAVFL_DATA_DIR")
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_writes_csv_and_sets_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY_OUTAGE).unwrap();
    let out = run_bin(
        dir.path(),
        &["outage", "--config", "tiny.toml", "--trials", "500", "--out", "res"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = std::fs::read_to_string(dir.path().join("res/outage.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), file);
    assert!(file.lines().nth(1).unwrap().ends_with(",500"));

    std::fs::write(dir.path().join("bad.toml"), "[sweep]\nratios = []").unwrap();
    let bad = run_bin(dir.path(), &["outage", "--config", "bad.toml"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(
        dir.path().join("gap.toml"),
        "seeds = [1]\n[fl]\nnum_clients = 10\nrounds = 1\n[sweep]\nratios = [100]\np_out = [0.0]",
    )
    .unwrap();
    let partial = run_bin(dir.path(), &["fig3", "--config", "gap.toml", "--out", "res"]);
    assert_eq!(partial.status.code(), Some(1));

    let missing = run_bin(dir.path(), &["fl", "--config", "tiny.toml", "--data-dir", "nowhere"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!dir.path().join("res/traces").exists());
}

#[test]
fn readme_defaults_match_builtin() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let len = readme[start..].find("```").unwrap();
    assert_eq!(config(&readme[start..start + len]), ExperimentConfig::default());
}
