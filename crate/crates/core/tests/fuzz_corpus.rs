//! The checked-in fuzz seeds must stay valid inputs, or the fuzzers start
//! from nothing but parse errors.

use std::fs;
use std::path::PathBuf;

use mpc_calib::metrics::PoseExport;
use mpc_calib::{CalibrationDataset, CalibrationResult, SimConfig};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn dataset_seeds_parse() {
    for (p, text) in seeds("dataset_json") {
        CalibrationDataset::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn result_seeds_parse() {
    for (p, text) in seeds("result_json") {
        CalibrationResult::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn config_seeds_parse() {
    for (p, text) in seeds("sim_config_json") {
        SimConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn pose_export_seeds_parse() {
    for (p, text) in seeds("pose_export") {
        PoseExport::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
