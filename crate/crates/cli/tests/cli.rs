use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn hhsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhsync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn small_config() -> Value {
    json!({
        "schema_version": 1,
        "scenario": "cli-small",
        "experiment": { "kind": "trajectory" },
        "populations": [{
            "name": "net",
            "size": 5,
            "params": {
                "g_na": 120.0, "g_k": 36.0, "g_l": 0.3,
                "v_na": 50.0, "v_k": -77.0, "v_l": -54.4,
                "i": 25.0,
                "noise": { "sigma": 0.5 }
            }
        }],
        "coupling": { "j_e": [[1.0]], "j_ch": [[0.0]], "v_rev": [[0.0]] },
        "step": { "dt": 0.01, "t_end": 2.0 },
        "replicas": 3,
        "seed": 11,
        "output": { "stride": 5 }
    })
}

fn write_json(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_list_and_validate() {
    let list = hhsync(&["preset"]);
    assert!(list.status.success());
    let names = String::from_utf8(list.stdout).unwrap();
    for name in ["fig2", "fig4", "fig5", "fig7", "fig8", "convergence", "chaos"] {
        assert!(names.lines().any(|l| l == name), "{name} missing from {names}");
    }
    let tmp = tempfile::tempdir().unwrap();
    for name in names.lines() {
        let out = hhsync(&["preset", name]);
        assert!(out.status.success());
        let path = tmp.path().join(format!("{name}.json"));
        fs::write(&path, &out.stdout).unwrap();
        let check = hhsync(&["validate", path.to_str().unwrap()]);
        assert!(check.status.success(), "{name}: {}", text(&check));
    }
    assert!(!hhsync(&["preset", "fig99"]).status.success());
}

#[test]
fn validate_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["coupling"]["j_e"] = json!([[-1.0]]);
    cfg["step"]["t_end"] = json!(2.005);
    cfg["replicas"] = json!(0);
    let path = write_json(tmp.path(), "bad.json", &cfg);
    let out = hhsync(&["validate", &path]);
    assert!(!out.status.success());
    let msg = text(&out);
    assert!(msg.contains("coupling.j_e[0][0]"), "{msg}");
    assert!(msg.contains("integer multiple"), "{msg}");
    assert!(msg.contains("replicas"), "{msg}");

    let mut cfg = small_config();
    cfg["step"]["tolerance"] = json!(1e-3);
    let path = write_json(tmp.path(), "unknown.json", &cfg);
    let msg = text(&hhsync(&["validate", &path]));
    assert!(msg.contains("tolerance"), "{msg}");

    let mut cfg = small_config();
    cfg.as_object_mut().unwrap().remove("seed");
    let path = write_json(tmp.path(), "seedless.json", &cfg);
    let msg = text(&hhsync(&["validate", &path]));
    assert!(msg.contains("seed"), "{msg}");
}

#[test]
fn run_report_and_rerun_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &small_config());
    let first = tmp.path().join("first");
    let out = hhsync(&["run", &cfg, "--out", first.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", text(&out));
    let manifest_path = first.join("manifest.json");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    for expected in ["main/stats.csv", "main/r0_trajectory.csv", "main/r2_spikes.csv", "summary.json"] {
        assert!(files.iter().any(|f| f["path"] == expected), "{expected} not listed");
    }
    let header = fs::read_to_string(first.join("main/r0_trajectory.csv")).unwrap();
    assert!(header.starts_with("t,neuron_id,V,m,n,h,y\n"));

    let report = hhsync(&["report", manifest_path.to_str().unwrap()]);
    assert!(report.status.success(), "{}", text(&report));

    let second = tmp.path().join("second");
    let rerun = hhsync(&["run", manifest_path.to_str().unwrap(), "--out", second.to_str().unwrap(), "--workers", "3"]);
    assert!(rerun.status.success(), "{}", text(&rerun));
    for f in files {
        let path = f["path"].as_str().unwrap();
        assert_eq!(
            fs::read(first.join(path)).unwrap(),
            fs::read(second.join(path)).unwrap(),
            "{path} differs between worker counts"
        );
    }

    let collision = hhsync(&["run", &cfg, "--out", first.to_str().unwrap()]);
    assert!(!collision.status.success());
    assert!(text(&collision).contains("not empty"));
    let replaced = hhsync(&["run", &cfg, "--out", first.to_str().unwrap(), "--overwrite"]);
    assert!(replaced.status.success(), "{}", text(&replaced));

    fs::write(first.join("main/stats.csv"), "tampered\n").unwrap();
    let report = hhsync(&["report", manifest_path.to_str().unwrap()]);
    assert!(!report.status.success());
    assert!(text(&report).contains("main/stats.csv"));
}

#[test]
fn run_needs_exactly_one_source_and_a_directory() {
    assert!(!hhsync(&["run"]).status.success());
    let msg = text(&hhsync(&["run", "--preset", "fig2"]));
    assert!(msg.contains("output directory"), "{msg}");
}
