use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mpc_calib::metrics::evaluate as evaluate_metrics;
use mpc_calib::{
    calibrate as run_calibration, generate, rectify_dataset, CalibrateOptions, CalibrationDataset, CalibrationResult,
    Error, Intrinsics, Result, SimConfig,
};
use sha2::{Digest, Sha256};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Prefix parse errors with the file they came from.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::ConfigInvalid(m) => Error::ConfigInvalid(format!("{}: {m}", path.display())),
        Error::InvalidDataset(m) => Error::InvalidDataset(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn load_dataset(path: &Path) -> Result<(CalibrationDataset, String)> {
    let text = read(path)?;
    let ds = in_file(path, CalibrationDataset::from_json(&text))?;
    Ok((ds, digest(&text)))
}

fn load_result(path: &Path) -> Result<CalibrationResult> {
    in_file(path, CalibrationResult::from_json(&read(path)?))
}

fn default_truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

pub fn simulate(config: &Path, out: &Path, truth: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = in_file(config, SimConfig::from_json(&read(config)?))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (ds, gt) = generate(&cfg)?;
    let text = ds.to_json();
    let sidecar = CalibrationResult::from_ground_truth(&gt, &ds, &digest(&text))?;
    let truth_path = truth.map_or_else(|| default_truth_path(out), Path::to_path_buf);
    write(out, &text)?;
    write(&truth_path, &sidecar.to_json())?;
    log::info!(
        "wrote {} poses x {} views to {} (ground truth {})",
        ds.pose_count(),
        cfg.grid().views().count(),
        out.display(),
        truth_path.display()
    );
    Ok(())
}

fn summary(result: &CalibrationResult, linear: &Intrinsics) -> String {
    let mut s = String::new();
    let est = result.intrinsics.to_array();
    let lin = linear.to_array();
    let _ = writeln!(s, "{:<8} {:>24} {:>24}", "param", "linear", "final");
    for (k, name) in Intrinsics::NAMES.iter().enumerate() {
        let _ = writeln!(s, "{name:<8} {:>24.16e} {:>24.16e}", lin[k], est[k]);
    }
    for (name, v) in mpc_calib::Distortion::NAMES.iter().zip(result.distortion.to_array()) {
        let _ = writeln!(s, "{name:<8} {:>24} {v:>24.16e}", "-");
    }
    let m = &result.metrics;
    let _ = writeln!(s, "{:<22} {:>14} {:>14}", "error", "initial", "optimized");
    let opt = |f: fn(&mpc_calib::io::MetricSummary) -> f64| {
        m.optimized.as_ref().map_or("-".to_string(), |o| format!("{:.6}", f(o)))
    };
    let _ = writeln!(s, "{:<22} {:>14.6} {:>14}", "rms re-projection px", m.initial.rms_px, opt(|o| o.rms_px));
    let _ = writeln!(s, "{:<22} {:>14.6} {:>14}", "mean re-projection px", m.initial.mean_px, opt(|o| o.mean_px));
    let _ = writeln!(s, "{:<22} {:>14.6} {:>14}", "rms ray error mm", m.initial.rms_mm, opt(|o| o.rms_mm));
    if let Some(r) = &result.optimizer {
        let _ = writeln!(s, "optimizer: {} iterations, {:?}", r.iterations, r.termination);
    }
    s
}

pub fn calibrate(dataset: &Path, out: &Path, options: &CalibrateOptions) -> Result<()> {
    let (ds, input_digest) = load_dataset(dataset)?;
    let cal = run_calibration(&ds, options)?;
    let result = CalibrationResult::from_calibration(&cal, &ds, &input_digest);
    write(out, &result.to_json())?;
    print!("{}", summary(&result, &cal.linear.intrinsics));
    Ok(())
}

pub fn evaluate(result: &Path, dataset: &Path, truth: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let r = load_result(result)?;
    let (ds, _) = load_dataset(dataset)?;
    r.check_consistent(&ds)?;
    let mut csv = evaluate_metrics(&r.params(), &ds)?.to_csv();
    if let Some(truth) = truth {
        let t = load_result(truth)?;
        t.check_consistent(&ds)?;
        let (e, g) = (r.intrinsics.to_array(), t.intrinsics.to_array());
        for (k, name) in Intrinsics::NAMES.iter().enumerate() {
            let _ = writeln!(csv, "rel_err,param:{name},{:.16e}", (e[k] - g[k]).abs() / g[k].abs());
        }
    }
    match out {
        Some(path) => write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn rectify(result: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let r = load_result(result)?;
    if !r.distortion_estimated {
        return Err(Error::DistortionNotEstimated(format!(
            "{} was calibrated with --skip-refine or --no-distortion",
            result.display()
        )));
    }
    let (ds, _) = load_dataset(dataset)?;
    let rectified = rectify_dataset(&ds, &r.intrinsics, &r.distortion);
    write(out, &rectified.to_json())
}
