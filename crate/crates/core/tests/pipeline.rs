use std::path::PathBuf;

use qrm_tomo::experiment::{compare_methods, run_stem, run_test, summary, Method, RunConfig};

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qrm-tomo-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn small(test_id: u32) -> RunConfig {
    RunConfig { test_id, cells: 20, source_cells: 40, basis_len: 4, ..RunConfig::default() }
}

#[test]
fn qrm_run_writes_artifacts() {
    let dir = scratch_dir("qrm");
    let cfg = small(1);
    let res = run_test(&cfg, Method::Qrm, Some(&dir)).unwrap();
    let stem = run_stem(1, Method::Qrm, cfg.noise);
    for suffix in [
        "config.txt",
        "data_clean.csv",
        "data_noisy.csv",
        "image.csv",
        "image.pgm",
        "image.pgm.minmax.txt",
        "image_post.csv",
        "image_post.pgm",
        "solver.csv",
        "metrics.csv",
    ] {
        assert!(dir.join(format!("{stem}_{suffix}")).is_file(), "missing {suffix}");
    }
    assert!(!dir.join(format!("{stem}_sinogram.csv")).exists());
    let echoed = std::fs::read_to_string(dir.join(format!("{stem}_config.txt"))).unwrap();
    let back = RunConfig::parse(&echoed).unwrap();
    assert_eq!(back.cells, 20);
    assert_eq!(back.basis_len, 4);
    assert_eq!(res.inclusions.len(), 1);
    assert!(res.diagnostics.is_some());
    let metrics = std::fs::read_to_string(dir.join(format!("{stem}_metrics.csv"))).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn fbp_run_and_comparison() {
    let dir = scratch_dir("fbp");
    let cfg = small(2);
    let fbp = run_test(&cfg, Method::Fbp, Some(&dir)).unwrap();
    let stem = run_stem(2, Method::Fbp, cfg.noise);
    assert!(dir.join(format!("{stem}_sinogram.pgm")).is_file());
    assert!(fbp.diagnostics.is_none());
    let qrm = run_test(&cfg, Method::Qrm, None).unwrap();
    let mut buf = Vec::new();
    compare_methods(&qrm, &fbp, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    // header plus three inclusions per method
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains(",qrm,") && text.contains(",fbp,"));
    let table = summary(&[qrm, fbp]);
    assert_eq!(table.lines().count(), 7);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn all_test_cases_run() {
    for id in 1..=4 {
        let res = run_test(&small(id), Method::Qrm, None).unwrap();
        assert!(res.image.values.iter().all(|v| v.is_finite()), "test {id}");
        assert!(res.relative_l2_error.is_finite());
    }
}

#[test]
fn same_seed_same_result() {
    let a = run_test(&small(1), Method::Qrm, None).unwrap();
    let b = run_test(&small(1), Method::Qrm, None).unwrap();
    assert_eq!(a.image.values, b.image.values);
    let c = run_test(&RunConfig { seed: 7, ..small(1) }, Method::Qrm, None).unwrap();
    assert_ne!(a.image.values, c.image.values);
}
