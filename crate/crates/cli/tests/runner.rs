//! Runner-level checks: catalog shape, config validation, byte-identical
//! reruns, and the field-dump converter.

use skelab_cli::{catalog, config::ExperimentConfig, default_config, run_from_config};

#[test]
fn catalog_has_ten_documented_entries() {
    let entries = catalog();
    assert!(entries.len() >= 10);
    for e in &entries {
        assert!(!e.description.is_empty());
        assert!(!e.expected_runtime.is_empty());
        assert!(default_config(e.name).is_some(), "no defaults for {}", e.name);
    }
    let names: Vec<&str> = entries.iter().map(|e| e.name).collect();
    for required in [
        "semigroup-identities",
        "besov-estimators",
        "noise-covariance",
        "model-ske-moments",
        "holder-exponents",
        "l1-contraction",
        "superlinear-pam",
        "filter-langevin",
        "filter-general",
        "ito-wentzell",
    ] {
        assert!(names.contains(&required), "missing {required}");
    }
}

#[test]
fn unknown_experiment_is_rejected() {
    let cfg = ExperimentConfig::parse(
        "version = 1\nexperiment = \"no-such-experiment\"\nseed = 1\n",
    )
    .unwrap();
    assert!(cfg.resolve().is_err());
}

#[test]
fn config_validation_rejects_bad_grid() {
    let cfg = ExperimentConfig::parse(
        "version = 1\nexperiment = \"semigroup-identities\"\nseed = 1\n[grid]\nlx = 8.0\nlv = 8.0\nnx = 7\nnv = 64\n",
    )
    .unwrap()
    .resolve()
    .unwrap();
    assert!(cfg.validate().is_err());
}

#[test]
fn rerun_with_identical_config_is_bit_identical() {
    // a fast experiment with nontrivial CSV output
    let cfg = default_config("superlinear-pam").unwrap();
    let root = tempfile::tempdir().unwrap();
    let out_a = root.path().join("a");
    let out_b = root.path().join("b");
    run_from_config(cfg.clone(), &out_a).unwrap();
    run_from_config(cfg, &out_b).unwrap();
    let mut compared = 0usize;
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(out_a.join(&name)).unwrap();
        let b = std::fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "artifact {name:?} differs between reruns");
        compared += 1;
    }
    assert!(compared >= 3);
}

#[test]
fn field_dump_roundtrip_through_csv() {
    let g = skelab::grid::make_grid(2.0f64, 2.0, 16, 16).unwrap();
    let f = skelab::grid::Field::from_fn(g, |x, v| x + 2.0 * v);
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("f.bin");
    skelab::grid::write_field_binary(&f, &bin).unwrap();
    let back: skelab::Field64 = skelab::grid::read_field_binary(&bin).unwrap();
    assert_eq!(back.values, f.values);
    let csv = dir.path().join("f.csv");
    skelab::grid::write_field_csv(&back, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,v,value"));
    assert_eq!(text.lines().count(), 1 + 16 * 16);
}
