use std::fs;
use std::path::Path;

use proptest::prelude::*;

use hhsync_core::diagnostics::ReplicaSeries;
use hhsync_core::epes::simulate;
use hhsync_core::experiment::{
    preset, run_ensemble, run_scenario, validate_config, verify_outputs, InjectedFailure, RunConfig, RunManifest,
    RunOptions, RunStatus, MANIFEST_FILE, PRESET_NAMES,
};
use hhsync_core::{Error, ReplicaNoise, StreamRng};

const MINIMAL: &str = r#"{
  "schema_version": 1,
  "scenario": "one-neuron",
  "experiment": { "kind": "single_neuron", "currents": [10.0] },
  "populations": [{
    "name": "cell", "size": 1,
    "params": { "g_na": 120.0, "g_k": 36.0, "g_l": 0.3, "v_na": 50.0, "v_k": -77.0, "v_l": -54.4, "i": 10.0 }
  }],
  "coupling": { "j_e": [[0.0]], "j_ch": [[0.0]], "v_rev": [[0.0]] },
  "step": { "dt": 0.01, "t_end": 50.0 },
  "initial": { "kind": "rest" },
  "seed": 1
}"#;

fn small_ensemble(replicas: u32) -> RunConfig {
    let mut cfg = preset("fig5").unwrap();
    cfg.grid = None;
    cfg.populations[0].size = 8;
    cfg.step.t_end = 3.0;
    cfg.replicas = replicas;
    cfg.output.stride = 3;
    cfg
}

fn options(workers: usize) -> RunOptions {
    RunOptions {
        workers,
        ..RunOptions::default()
    }
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.retain(|p| p != MANIFEST_FILE);
    out.sort();
    out
}

#[test]
fn minimal_config_parses() {
    let cfg = validate_config(MINIMAL).unwrap();
    assert_eq!(cfg.replicas, 1);
    assert_eq!(cfg.output.stride, 1);
    assert_eq!(cfg.cells().len(), 1);
}

#[test]
fn violations_are_aggregated_with_paths() {
    let raw = MINIMAL
        .replace(r#""j_e": [[0.0]]"#, r#""j_e": [[-2.0]]"#)
        .replace(r#""t_end": 50.0"#, r#""t_end": 50.005"#)
        .replace(r#""g_l": 0.3"#, r#""g_l": -0.3"#);
    let errs = validate_config(&raw).unwrap_err();
    assert!(errs.iter().any(|e| e.starts_with("coupling.j_e[0][0]")), "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("step") && e.contains("integer multiple")), "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("populations[0].params.g_l")), "{errs:?}");
}

#[test]
fn structural_errors_name_the_key() {
    let unknown = MINIMAL.replace(r#""seed": 1"#, r#""seed": 1, "speed": 2"#);
    let errs = validate_config(&unknown).unwrap_err();
    assert!(errs[0].contains("speed"), "{errs:?}");
    let seedless = MINIMAL.replace(r#","seed": 1"#, "").replace(",\n  \"seed\": 1", "");
    let errs = validate_config(&seedless).unwrap_err();
    assert!(errs[0].contains("seed"), "{errs:?}");
    assert!(validate_config("{").is_err());
}

#[test]
fn presets_round_trip_and_validate() {
    for name in PRESET_NAMES {
        let cfg = preset(name).unwrap();
        assert!(cfg.violations().is_empty(), "{name}: {:?}", cfg.violations());
        let back = validate_config(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
    assert!(preset("nope").is_none());
}

#[test]
fn preset_contents() {
    let fig4 = preset("fig4").unwrap();
    let labels: Vec<String> = fig4.cells().into_iter().map(|c| c.label).collect();
    assert_eq!(labels.len(), 12);
    assert!(labels.contains(&"N10000_sigma0.5".to_string()));
    assert_eq!(fig4.coupling.j_e, vec![vec![1.0]]);
    assert_eq!(fig4.coupling.j_ch, vec![vec![0.0]]);
    assert_eq!(fig4.populations[0].params.i_ext, 25.0);

    let fig7 = preset("fig7").unwrap();
    assert_eq!(fig7.coupling.j_e, vec![vec![0.0]]);
    assert_eq!(fig7.coupling.v_rev, vec![vec![-75.0]]);
    assert_eq!(preset("fig8").unwrap().coupling.v_rev, vec![vec![0.0]]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edited_presets_round_trip(
        idx in 0..PRESET_NAMES.len(), seed in any::<u64>(), stride in 1u64..50, sigma in 0.0..2.0f64,
    ) {
        let mut cfg = preset(PRESET_NAMES[idx]).unwrap();
        cfg.seed = seed;
        cfg.output.stride = stride;
        cfg.populations[0].params.noise.sigma = sigma;
        let back = validate_config(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn fig2_writes_four_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = preset("fig2").unwrap();
    cfg.step.t_end = 20.0;
    let manifest = run_scenario(&cfg, tmp.path(), &options(1)).unwrap();
    let trajectories: Vec<&str> = manifest
        .files
        .iter()
        .map(|f| f.path.as_str())
        .filter(|p| p.ends_with("trajectory.csv"))
        .collect();
    assert_eq!(trajectories, ["I0/trajectory.csv", "I10/trajectory.csv", "I100/trajectory.csv", "I200/trajectory.csv"]);
}

#[test]
fn fig7_inhibitory_network_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = preset("fig7").unwrap();
    cfg.step.t_end = 5.0;
    let manifest = run_scenario(&cfg, tmp.path(), &options(1)).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);
    assert!(manifest.files.iter().any(|f| f.path == "main/r0_trajectory.csv"));
}

#[test]
fn one_replica_ensemble_is_that_replica() {
    let cfg = small_ensemble(1);
    let cell = cfg.cells().remove(0);
    let outcome = run_ensemble(&cfg, &cell, &options(1)).unwrap();
    let start = cfg.initial.sample(&cell.model, &cell.sizes, &StreamRng::new(cfg.seed), 0).unwrap();
    let mut series = ReplicaSeries::default();
    simulate(&cell.model, start, &cfg.step, &ReplicaNoise::new(cfg.seed, 0), |k, s| {
        if k % cfg.output.stride == 0 {
            series.push(cfg.step.time(k), &s.neurons)?;
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(outcome.stats[0].variance_v(), series.variance_v());
    assert_eq!(outcome.stats[0].mean, series.means);
}

#[test]
fn outputs_are_identical_across_worker_counts_and_fully_listed() {
    let cfg = small_ensemble(6);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_scenario(&cfg, a.path(), &options(1)).unwrap();
    let mb = run_scenario(&cfg, b.path(), &options(4)).unwrap();
    assert_eq!(ma.files, mb.files);
    assert!(verify_outputs(&ma, a.path()).is_empty());
    let listed: Vec<String> = ma.files.iter().map(|f| f.path.clone()).collect();
    assert_eq!(listed, files_under(a.path()));
    let on_disk = RunManifest::from_json(&fs::read_to_string(a.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, ma);
}

#[test]
fn output_collision_is_refused() {
    let cfg = small_ensemble(1);
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&cfg, tmp.path(), &options(1)).unwrap();
    let err = run_scenario(&cfg, tmp.path(), &options(1)).unwrap_err();
    assert!(matches!(err, Error::Run(ref m) if m.contains("not empty")), "{err}");
    let again = RunOptions {
        overwrite: true,
        ..options(1)
    };
    run_scenario(&cfg, tmp.path(), &again).unwrap();
}

#[test]
fn failed_replica_is_retried_with_the_same_stream() {
    let cfg = small_ensemble(4);
    let (clean, flaky) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let reference = run_scenario(&cfg, clean.path(), &options(2)).unwrap();
    let once = RunOptions {
        inject_failure: Some(InjectedFailure { replica: 2, attempts: 1 }),
        ..options(2)
    };
    let retried = run_scenario(&cfg, flaky.path(), &once).unwrap();
    assert_eq!(reference.files, retried.files);
}

#[test]
fn twice_failed_replica_aborts_and_keeps_partials() {
    let cfg = small_ensemble(4);
    let tmp = tempfile::tempdir().unwrap();
    let twice = RunOptions {
        inject_failure: Some(InjectedFailure { replica: 1, attempts: 2 }),
        ..options(2)
    };
    let err = run_scenario(&cfg, tmp.path(), &twice).unwrap_err();
    assert!(matches!(err, Error::Run(ref m) if m.contains("replica 1")), "{err}");
    let manifest = RunManifest::from_json(&fs::read_to_string(tmp.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.status, RunStatus::Aborted);
    assert!(manifest.error.unwrap().contains("replica 1"));
    assert_eq!(manifest.files.len(), 1);
    assert_eq!(manifest.files[0].path, "main/stats.partial.csv");
    assert!(verify_outputs(&RunManifest { files: manifest.files.clone(), ..reference_manifest(&cfg) }, tmp.path()).is_empty());
}

fn reference_manifest(cfg: &RunConfig) -> RunManifest {
    RunManifest {
        schema_version: 1,
        code_version: String::new(),
        status: RunStatus::Complete,
        error: None,
        config: cfg.clone(),
        files: Vec::new(),
        wall_clock_seconds: 0.0,
        steps: 0,
        neuron_steps: 0,
        projections: 0,
        workers: 1,
    }
}
