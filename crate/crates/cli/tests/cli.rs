use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use impact_game::emit::CSV_HEADER;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impact-game"))
        .args(args)
        .env_remove("IMPACT_GAME_WORKERS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn fig2_writes_three_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["scenario", "fig2", "--seed", "7", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csvs: Vec<_> = tree(dir.path()).into_iter().filter(|(n, _)| n.ends_with(".csv")).collect();
    assert_eq!(csvs.len(), 3);
    for (name, body) in csvs {
        let text = String::from_utf8(body).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER, "{name}");
        assert_eq!(lines.len(), 1 + 20, "{name}");
    }
    assert!(dir.path().join("fig2.json").exists());
}

#[test]
fn same_seed_gives_identical_trees() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, workers: &str| {
        let o = bin(&["scenario", "fig5", "--paths", "2000", "--workers", workers, "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    };
    run(a.path(), "1");
    run(b.path(), "3");
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn manifest_config_reloads_to_the_run_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["scenario", "fig3", "--paths", "500", "--seed", "11", "--format", "json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("fig3.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["points"].as_array().unwrap().len(), 6);
    let config = dir.path().join("config.json");
    fs::write(&config, serde_json::to_string(&manifest["config"]).unwrap()).unwrap();
    let reloaded = impact_game::load_config(&config).unwrap();
    let mut expected = impact_game::presets::preset("fig3").unwrap();
    expected.simulation.seed = 11;
    expected.simulation.num_paths = 500;
    assert_eq!(reloaded, expected);
}

#[test]
fn simulate_runs_a_file_and_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("game.json");
    fs::write(&cfg, r#"{"name": "small", "horizon": 4, "traders": [{"inventory": 5e4}, {"inventory": -2e4}]}"#).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["simulate", cfg.to_str().unwrap(), "--paths", "300", "--format", "svg", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(out.join("small_01.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn inadmissible_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"market": {"alpha": 1.0, "beta": 1.0}}"#).unwrap();
    let o = bin(&["simulate", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("admissibility violated"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"horizon\": 10,\n  \"traders\": 3\n}\n").unwrap();
    let o = bin(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json:3:"), "{}", stderr(&o));
}

#[test]
fn numerical_failures_exit_two() {
    use impact_game_core::Error;
    for e in [
        Error::ConcavityLost { t: 3, trader: 1, a: -1.0 },
        Error::SingularEquilibrium { t: 2 },
        Error::NoConvergence { iterations: 10 },
        Error::UnboundedObjective { t: 1, trader: 2 },
    ] {
        assert_eq!(impact_game::CliError::core("x", e).exit_code(), 2);
    }
    assert_eq!(impact_game::CliError::VerifyFailed { failed: 1, total: 12 }.exit_code(), 2);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(bin(&[]).status.code(), Some(64));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(bin(&["scenario", "fig99"]).status.code(), Some(64));
    assert_eq!(bin(&["scenario", "fig2", "--format", "png"]).status.code(), Some(64));
    let o = bin(&["scenario", "fig2", "--paths", "ten"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_and_list_succeed() {
    let o = bin(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let o = bin(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 15);
    assert!(text.contains("fig16"));
}

#[test]
fn solve_prints_a_table_per_grid_point() {
    let o = bin(&["solve", "fig2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("# fig2").count(), 3);
    let o = bin(&["solve", "benchmark", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["policy"].as_array().unwrap().len(), 10);
}

#[test]
fn worker_variable_must_be_a_number() {
    let o = Command::new(env!("CARGO_BIN_EXE_impact-game"))
        .args(["scenario", "benchmark", "--paths", "10"])
        .env("IMPACT_GAME_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(64));
}
