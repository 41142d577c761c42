use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn cjlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cjlab"))
        .args(args)
        .env_remove("CJLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cjlab-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn no_arguments_prints_usage_and_exits_64() {
    let out = cjlab(&[]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_command_exits_64_and_help_exits_0() {
    assert_eq!(cjlab(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(cjlab(&["norm", "--bogus-flag"]).status.code(), Some(64));
    assert_eq!(cjlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn box_norm_matches_closed_form() {
    let out = cjlab(&["norm", "--kernel", "box", "--eps", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "norm");
    assert_eq!(v["config"]["kernel"], "box");
    let h = v["result"]["v_step"].as_f64().unwrap();
    let b1 = v["result"]["report"]["components"]["B_eps_1"].as_f64().unwrap();
    assert!((b1 - 1.5).abs() <= 2.0 * h, "B_eps_1 = {b1}, h = {h}");
}

#[test]
fn transposition_adjoint_check_passes() {
    let out = cjlab(&["adjoint-check", "--n", "1", "--d", "1", "--perm", "transpose 1 2", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["result"]["tuples"].as_array().unwrap().len(), 20);
    assert!(v["result"]["worst_gap_over_tolerance"].as_f64().unwrap() <= 1.0);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = scratch("repeat");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let json = dir.join(format!("run{k}.json"));
        let csv = dir.join(format!("run{k}.csv"));
        let out = cjlab(&[
            "growth",
            "--seed",
            "11",
            "--samples",
            "2048",
            "--set",
            "n_max=3",
            "--output",
            json.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((std::fs::read(json).unwrap(), std::fs::read(csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let form_a = cjlab(&["form", "--seed", "5", "--n", "2", "--samples", "4096"]);
    let form_b = cjlab(&["form", "--seed", "5", "--n", "2", "--samples", "4096"]);
    assert_eq!(form_a.stdout, form_b.stdout);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# box kernel at a finer α grid\nkernel = box\nalpha_res = 32\neps = 0.5\n").unwrap();
    let out = cjlab(&["norm", "--config", cfg.to_str().unwrap(), "--eps", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["config"]["alpha_res"], "32");
    assert_eq!(v["config"]["eps"], "1.0");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn validation_and_resolution_exit_codes() {
    assert_eq!(cjlab(&["growth"]).status.code(), Some(2), "seed is mandatory");
    assert_eq!(cjlab(&["mixing"]).status.code(), Some(2), "seed is mandatory");
    assert_eq!(cjlab(&["norm", "--set", "perm=swap"]).status.code(), Some(2));
    assert_eq!(cjlab(&["knorm", "--eps", "2"]).status.code(), Some(2));
    assert_eq!(cjlab(&["norm", "--output", "/nonexistent/dir/out.json"]).status.code(), Some(2));
    let coarse = ["mixing", "--seed", "1", "--points", "32", "--set", "steps=2", "--set", "intervals=2"];
    assert_eq!(cjlab(&coarse).status.code(), Some(3));
}

#[test]
fn still_flow_has_zero_mixing_identity() {
    let dir = scratch("mixing");
    let csv = dir.join("mix.csv");
    let out = cjlab(&[
        "mixing",
        "--seed",
        "0",
        "--set",
        "flow=still",
        "--points",
        "32",
        "--set",
        "steps=16",
        "--set",
        "intervals=4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert!(v["result"]["mixing"]["lhs"].as_f64().unwrap().abs() <= 1e-8);
    assert!(v["result"]["mixing"]["rhs"].as_f64().unwrap().abs() <= 1e-8);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("eps,T,lhs,rhs,gap,resolution\n"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn every_subcommand_runs_on_small_settings() {
    let runs: &[&[&str]] = &[
        &["knorm", "--set", "k_max=2"],
        &["decompose", "--set", "j_min=-2", "--set", "j_max=2"],
        &["commutator", "--points", "256"],
        &["rotation-check", "--points", "64", "--set", "theta_nodes=32"],
        &["schur", "--set", "suite=si-ann"],
        &["carleson", "--set", "weight=indicator", "--set", "j_max=0"],
        &["form", "--kernel", "gaussian-tensor"],
    ];
    for args in runs {
        let out = cjlab(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json_of(&out)["command"], args[0]);
    }
}
