mod common;

use std::collections::BTreeSet;

use dasep_core::config::{parse_config, ExperimentKind, Tolerances};
use dasep_core::error::{ConfigError, Error};
use dasep_core::experiment::run_experiment_with;
use dasep_core::output::{format_f64, write_outputs, Artifact, CsvTable, RunManifest, MANIFEST_NAME};
use proptest::prelude::*;

fn errors(text: &str) -> Vec<ConfigError> {
    match parse_config(text) {
        Err(Error::Config(v)) => v,
        other => panic!("expected config errors, got {other:?}"),
    }
}

#[test]
fn minimal_simulate_config_gets_documented_tolerances() {
    let cfg = parse_config("schema_version = 1\nexperiment = \"simulate\"\n").unwrap();
    assert_eq!(cfg.kind, ExperimentKind::Simulate);
    assert_eq!(
        cfg.tolerances,
        Tolerances {
            generator: 1e-10,
            se_factor: 3.0,
            duhamel: 1e-6,
            p_value: 0.01,
            variance: 0.01,
            bessel: 1e-8,
            mass: 1e-10,
            slope: 0.1,
            c1: 1.0,
            ks_distance: 0.05,
            ks_periodic: 0.07,
            stability: 2.0,
        }
    );
    assert_eq!(cfg.model.eps, 0.1);
}

#[test]
fn negative_eps_is_reported_at_its_key() {
    let errs = errors("schema_version = 1\nexperiment = \"simulate\"\nmodel.eps = -0.1\n");
    assert!(errs
        .iter()
        .any(|e| matches!(e, ConfigError::Range { key, .. } if key == "model.eps")));
}

#[test]
fn odd_winding_on_even_ring_is_a_schema_error() {
    let errs = errors(
        "schema_version = 1\nexperiment = \"simulate\"\ndomain.kind = \"ring\"\ndomain.period = 64\n\
         domain.winding = 3\ninitial.profile = \"flat\"\n",
    );
    let e = errs.iter().find(|e| matches!(e, ConfigError::Schema { .. })).unwrap();
    assert!(e.to_string().contains("mod 2"), "{e}");
}

#[test]
fn unknown_keys_and_bad_types_are_all_reported() {
    let errs = errors(
        "schema_version = 1\nexperiment = \"simulate\"\nmodel.colour = 1\ntime.t_end = \"long\"\nmodel.eps = 0.0\n",
    );
    let keys: BTreeSet<&str> = errs.iter().map(|e| e.key()).collect();
    for k in ["model.colour", "time.t_end", "model.eps"] {
        assert!(keys.contains(k), "{keys:?}");
    }
}

#[test]
fn empty_ensemble_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let t = CsvTable::new(&["trajectory", "time", "site", "height"]);
    let hashes = write_outputs(&[Artifact::csv("snapshots.csv", t)], dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("snapshots.csv")).unwrap();
    assert_eq!(text, "trajectory,time,site,height\n");
    assert_eq!(hashes.len(), 1);
}

#[test]
fn manifest_round_trips_and_hashes_are_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config("simulate", dir.path(), "ensemble.size = 4\ntime.t_end = 5.0\nensemble.events = true");
    let m = run_experiment_with(&cfg, None).unwrap();
    assert!(m.pass);
    let back = RunManifest::read(dir.path()).unwrap();
    assert_eq!(back, m);
    assert!(m.verify(dir.path()).unwrap().is_empty());
    let listed: BTreeSet<String> = m.files.keys().cloned().collect();
    let on_disk: BTreeSet<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_NAME)
        .collect();
    assert_eq!(listed, on_disk);
    std::fs::write(dir.path().join("trajectories.csv"), "tampered\n").unwrap();
    assert_eq!(m.verify(dir.path()).unwrap(), vec!["trajectories.csv".to_string()]);
}

#[test]
fn converge_records_distinct_seeds_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config("converge", dir.path(), "seed = 99\nconverge.eps = [0.1]\nensemble.size = 500");
    let m = run_experiment_with(&cfg, None).unwrap();
    assert!(!m.seeds.is_empty());
    let mut all = BTreeSet::new();
    for (label, seeds) in &m.seeds {
        assert_eq!(seeds.len(), 500, "{label}");
        assert_eq!(seeds.iter().collect::<BTreeSet<_>>().len(), 500, "{label}");
        all.extend(seeds.iter().copied());
    }
    assert_eq!(all.len(), 500 * m.seeds.len());
}

#[test]
fn generator_verdict_follows_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_experiment_with(&common::config("verify-generator", dir.path(), ""), None).unwrap();
    assert!(ok.pass);
    let strict = common::config("verify-generator", dir.path(), "tolerance.generator = 1e-300");
    assert!(!run_experiment_with(&strict, None).unwrap().pass);
}

#[test]
fn seed_override_is_applied_and_recorded() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let body = "ensemble.size = 3\ntime.t_end = 5.0";
    let via_env = run_experiment_with(&common::config("simulate", d1.path(), body), Some("42")).unwrap();
    let via_cfg = run_experiment_with(&common::config("simulate", d2.path(), &format!("{body}\nseed = 42")), None).unwrap();
    assert_eq!(via_env.seed_override.as_deref(), Some("42"));
    assert_eq!(via_env.config.seed, 42);
    assert_eq!(via_env.seeds, via_cfg.seeds);
    assert_eq!(via_env.files, via_cfg.files);
    assert!(run_experiment_with(&common::config("simulate", d1.path(), body), Some("minus one")).is_err());
}

#[test]
fn reruns_are_byte_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let body = "ensemble.size = 6\ntime.t_end = 10.0\nensemble.events = true\nseed = 5";
    let a = run_experiment_with(&common::config("simulate", d1.path(), body), None).unwrap();
    let b = run_experiment_with(&common::config("simulate", d2.path(), &format!("{body}\nthreads = 2")), None).unwrap();
    assert_eq!(a.files, b.files);
    for name in a.files.keys() {
        assert_eq!(
            std::fs::read(d1.path().join(name)).unwrap(),
            std::fs::read(d2.path().join(name)).unwrap()
        );
    }
}

#[test]
fn module_errors_carry_the_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config("periodic-converge", dir.path(), "model.rate = \"classic\"\ndomain.kind = \"ring\"\ninitial.profile = \"flat\"");
    let err = run_experiment_with(&cfg, None).unwrap_err();
    assert!(err.to_string().starts_with("periodic-converge:"), "{err}");
}

proptest! {
    #[test]
    fn floats_round_trip_bit_exactly(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), bits);
    }
}
