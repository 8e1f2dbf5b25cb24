use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subrh_cli::{emit_plots, git_blob_sha256, PlotError};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn subrh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subrh")).args(args).output().expect("spawn subrh")
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    subrh(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SHORT_FLOW: &str = "scenario = flow\nseed = 4\ngrid.n = 8\ntarget.name = sphere\nflow.max_steps = 120\nrecord_every = 10\n";

#[test]
fn missing_config_file_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(&tmp.path().join("nope.conf"), &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn invalid_configs_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let bodies = [
        "scenario = flow\nbogus.key = 1\n",
        "scenario = flow\ngrid.n = 16\ngrid.n = 32\n",
        "scenario = flow\ngrid.n = 16\ngrid.dt = 0.01\n",
        "scenario = heat\ntarget.name = sphere\n",
        "scenario = flow\ntarget.name = sphere\ninit.winding = 1,0,0,1\n",
        "this line has no equals sign\n",
    ];
    for (i, body) in bodies.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.conf"), body);
        let out = run_config(&cfg, &tmp.path().join(format!("o{i}")), &[]);
        assert_eq!(out.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn heat_run_conserves_mass() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(&configs().join("heat.conf"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = json(&tmp.path().join("summary.json"));
    let drift = s.pointer("/metrics/mass_drift").unwrap().as_f64().unwrap();
    assert!(drift <= 1e-12, "mass drift {drift:e}");
    assert_eq!(s["grid_n"], 32);
    assert!(tmp.path().join("snapshots/final.bin").exists());
    assert!(tmp.path().join("plots/energy.gp").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "f.conf", SHORT_FLOW);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config(&cfg, &a, &[]).status.code().is_some());
    assert!(run_config(&cfg, &b, &[]).status.code().is_some());
    for f in ["records.csv", "summary.json", "snapshots/final.bin", "snapshots/final.bin.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "f.conf", SHORT_FLOW);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_config(&cfg, &a, &[]);
    run_config(&cfg, &b, &["--seed", "5"]);
    assert_ne!(std::fs::read(a.join("records.csv")).unwrap(), std::fs::read(b.join("records.csv")).unwrap());
    assert_eq!(json(&b.join("summary.json"))["seed"], 5);
}

#[test]
fn manifest_echo_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "f.conf", SHORT_FLOW);
    let a = tmp.path().join("a");
    run_config(&cfg, &a, &["--grid", "10"]);
    let m = json(&a.join("manifest.json"));
    let text = m["config_text"].as_str().unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap(), git_blob_sha256(text.as_bytes()));
    assert_eq!(m["source_config_hash"].as_str().unwrap(), git_blob_sha256(SHORT_FLOW.as_bytes()));
    let csv = std::fs::read(a.join("records.csv")).unwrap();
    assert_eq!(m["outputs"]["records.csv"].as_str().unwrap(), git_blob_sha256(&csv));

    let echo = write_config(tmp.path(), "echo.conf", text);
    let b = tmp.path().join("b");
    run_config(&echo, &b, &[]);
    assert_eq!(csv, std::fs::read(b.join("records.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
    assert_eq!(json(&b.join("manifest.json"))["config_text"].as_str().unwrap().replace(b.to_str().unwrap(), a.to_str().unwrap()), text);
}

#[test]
fn runtime_abort_exits_with_one_and_keeps_partial_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "abort.conf",
        "scenario = flow\ngrid.n = 8\ngrid.dt = 0.0015\ntarget.name = sphere\nflow.reproject_every = none\ninit.amplitude = 2\nstop.t_max = 50\n",
    );
    let out = run_config(&cfg, tmp.path().join("o").as_path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tmp.path().join("o");
    let s = json(&dir.join("summary.json"));
    assert_eq!(s["aborted"], true);
    assert!(s["error"].as_str().unwrap().contains("tubular"));
    let rows = std::fs::read_to_string(dir.join("records.csv")).unwrap().lines().count();
    assert!(rows >= 2, "header plus at least one record");
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn cc_ball_volume_exponent_is_near_four() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(&configs().join("cc_ball.conf"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let e = json(&tmp.path().join("summary.json")).pointer("/metrics/cc_ball/exponent").unwrap().as_f64().unwrap();
    assert!((3.6..=4.4).contains(&e), "exponent {e}");
    let gp = std::fs::read_to_string(tmp.path().join("plots/cc_ball.gp")).unwrap();
    assert!(gp.contains(&format!("fitted exponent = {e:.4}")));
}

#[test]
fn plot_datablock_holds_every_row() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("records.csv");
    let rows: Vec<String> = (1..=7).map(|i| format!("{},{}", 0.01 * i as f64, (0.01 * i as f64).powf(-1.5))).collect();
    std::fs::write(&rec, format!("t,sup\n{}\n", rows.join("\n"))).unwrap();
    std::fs::write(tmp.path().join("summary.json"), r#"{"metrics":{"kernel":{"exponent":-1.5}}}"#).unwrap();
    let paths = emit_plots(&rec, &tmp.path().join("plots")).unwrap();
    assert_eq!(paths.len(), 1);
    let gp = std::fs::read_to_string(&paths[0]).unwrap();
    let block: Vec<&str> = gp.lines().skip_while(|l| !l.starts_with("$data <<")).skip(1).take_while(|l| *l != "EOD").collect();
    assert_eq!(block, rows);
    assert!(gp.contains("fitted slope = -1.5000"));
    assert!(gp.contains("set logscale xy"));
}

#[test]
fn empty_records_produce_no_plot_files() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("records.csv");
    std::fs::write(&rec, "t,E_H\n").unwrap();
    let dir = tmp.path().join("plots");
    assert!(matches!(emit_plots(&rec, &dir), Err(PlotError::Empty(_))));
    assert!(!dir.exists());
}
