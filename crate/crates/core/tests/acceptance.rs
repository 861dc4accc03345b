//! End-to-end acceptance checks. Runs as a plain binary (no libtest
//! harness) and prints one PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

use std::time::{Duration, Instant};

use mpc_calib::geometry::{intersect_two_rays, triangulate};
use mpc_calib::refine::{jacobian_in, residuals_in, ResidualDomain};
use mpc_calib::simulator::TrialSummary;
use mpc_calib::transforms::{p1_respace, p2_offset, p3_scale, RayOffset, RayScale};
use mpc_calib::{
    generate, linear_calibrate, run_trials, CalibrateOptions, Distortion, Intrinsics, ParameterVector, Point3, Ray,
    SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Camera used throughout: the reference simulation camera.
fn reference() -> SimConfig {
    SimConfig::default()
}

fn fixed_pose_config(sigma: f64) -> SimConfig {
    SimConfig {
        noise_sigma: sigma,
        fixed_rotations_deg: vec![[6.0, 28.0, -8.0], [12.0, -10.0, 15.0], [-5.0, 5.0, -27.0]],
        ..reference()
    }
}

/// The simulated camera has no distortion, so the noise studies refine
/// intrinsics and poses with the distortion held at zero.
fn no_distortion() -> CalibrateOptions {
    CalibrateOptions { estimate_distortion: false, ..CalibrateOptions::default() }
}

fn fails(summary: &TrialSummary) -> usize {
    summary.trials.len() - summary.successes().count()
}

fn criterion_1() -> Outcome {
    let mut worst_intr: f64 = 0.0;
    let mut worst_rot: f64 = 0.0;
    let mut worst_trans: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for seed in 0..10 {
        let cfg = SimConfig { seed, ..reference() };
        let (ds, truth) = generate(&cfg).unwrap();
        let start = Instant::now();
        let lin = match linear_calibrate(&ds, ds.camera_kind) {
            Ok(l) => l,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        slowest = slowest.max(start.elapsed());
        let (e, t) = (lin.intrinsics.to_array(), truth.intrinsics.to_array());
        for k in 0..6 {
            worst_intr = worst_intr.max((e[k] - t[k]).abs() / t[k].abs());
        }
        for (est, tru) in lin.poses.iter().zip(&truth.poses) {
            let (angle, dist) = est.difference(tru);
            worst_rot = worst_rot.max(angle);
            worst_trans = worst_trans.max(dist / tru.translation.norm());
        }
    }
    let pass = worst_intr < 1e-6 && worst_rot < 1e-6 && worst_trans < 1e-6 && slowest < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "10 seeds: max intrinsic rel err {worst_intr:.2e}, max rotation err {worst_rot:.2e} rad, \
             max rel translation err {worst_trans:.2e}, slowest init {:.3} s",
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let summary = run_trials(&fixed_pose_config(0.5), 150, &no_distortion()).unwrap();
    let elapsed = start.elapsed();
    let errs: Vec<f64> = ["k_i", "k_j", "k_u", "k_v"].iter().map(|p| summary.mean_rel_err(p).unwrap()).collect();
    let pp = summary.mean_principal_point_err_px();
    let pass = fails(&summary) == 0
        && errs.iter().all(|e| *e < 5e-3)
        && pp.iter().all(|e| *e < 0.5)
        && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "150 trials: mean rel err k_i {:.3}% k_j {:.3}% k_u {:.3}% k_v {:.3}%, principal point ({:.3}, {:.3}) px, \
             {} failed, {:.1} s",
            errs[0] * 100.0,
            errs[1] * 100.0,
            errs[2] * 100.0,
            errs[3] * 100.0,
            pp[0],
            pp[1],
            fails(&summary),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let views = [4u32, 5, 6, 7];
    let mut worst = (0.0f64, String::new());
    let mut failed = 0;
    let mut by_pose = Vec::new();
    for n_poses in 3..=8usize {
        let mut acc = 0.0;
        for &v in &views {
            let cfg = SimConfig {
                n_poses,
                view_grid: [v, v],
                noise_sigma: 0.5,
                seed: 1000 + 10 * n_poses as u64 + v as u64,
                ..reference()
            };
            let summary = run_trials(&cfg, 50, &no_distortion()).unwrap();
            failed += fails(&summary);
            for name in Intrinsics::NAMES {
                let e = summary.mean_rel_err(name).unwrap();
                acc += e;
                if e > worst.0 {
                    worst = (e, format!("{name} at {n_poses} poses, {v}x{v} views"));
                }
            }
        }
        by_pose.push(acc / (views.len() * Intrinsics::NAMES.len()) as f64);
    }
    let elapsed = start.elapsed();
    // Least-squares slope of the cell-averaged error against pose count.
    let n = by_pose.len() as f64;
    let xs: Vec<f64> = (3..=8).map(|p| p as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = by_pose.iter().sum::<f64>() / n;
    let slope = xs.iter().zip(&by_pose).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let pass = failed == 0
        && worst.0 < 5e-3
        && slope < 0.0
        && by_pose.last() < by_pose.first()
        && elapsed < Duration::from_secs(600);
    let trend: Vec<String> = by_pose.iter().map(|e| format!("{:.3}%", e * 100.0)).collect();
    outcome(
        pass,
        format!(
            "24 cells x 50 trials: worst mean rel err {:.3}% ({}), mean error by pose count 3..8 [{}], \
             slope {:.2e}/pose, {failed} failed, {:.1} s",
            worst.0 * 100.0,
            worst.1,
            trend.join(", "),
            slope,
            elapsed.as_secs_f64()
        ),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn criterion_4() -> Outcome {
    let sigmas: Vec<f64> = (1..=15).map(|k| k as f64 * 0.1).collect();
    let mut per_param = vec![Vec::new(); 6];
    let mut failed = 0;
    for (k, &sigma) in sigmas.iter().enumerate() {
        let cfg = SimConfig { seed: 4000 + k as u64, ..fixed_pose_config(sigma) };
        let summary = run_trials(&cfg, 50, &no_distortion()).unwrap();
        failed += fails(&summary);
        for (p, name) in Intrinsics::NAMES.iter().enumerate() {
            per_param[p].push(summary.mean_rel_err(name).unwrap());
        }
    }
    let r: Vec<f64> = per_param.iter().map(|e| pearson(&sigmas, e)).collect();
    let pass = failed == 0 && r.iter().all(|v| *v > 0.9);
    let listed: Vec<String> = Intrinsics::NAMES.iter().zip(&r).map(|(n, v)| format!("{n} {v:.4}")).collect();
    outcome(pass, format!("sigma 0.1..1.5, 50 trials each: Pearson r {}, {failed} failed", listed.join(", ")))
}

fn criterion_5() -> Outcome {
    let lens = Distortion { k1: -0.08, k2: 0.03, k3: 0.6, k4: -0.5 };
    let sigmas = [0.25, 0.5, 1.0];
    let mut improved = 0;
    let mut total = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut in_band = 0;
    let mut band_total = 0;
    let mut band = (f64::INFINITY, 0.0f64);
    for (k, &sigma) in sigmas.iter().enumerate() {
        let distorted = SimConfig { noise_sigma: sigma, distortion: lens, seed: 5000 + k as u64, ..reference() };
        let summary = run_trials(&distorted, 20, &CalibrateOptions::default()).unwrap();
        total += summary.trials.len();
        for r in summary.successes() {
            worst_ratio = worst_ratio.max(r.final_rms_px / r.initial_rms_px);
            if r.final_rms_px < r.initial_rms_px {
                improved += 1;
            }
        }

        let clean = SimConfig { noise_sigma: sigma, seed: 5100 + k as u64, ..reference() };
        let summary = run_trials(&clean, 20, &CalibrateOptions::default()).unwrap();
        band_total += summary.trials.len();
        for r in summary.successes() {
            let ratio = r.final_rms_px / sigma;
            band = (band.0.min(ratio), band.1.max(ratio));
            if (0.85..=1.15).contains(&ratio) {
                in_band += 1;
            }
        }
    }
    let pass = improved == total && in_band == band_total;
    outcome(
        pass,
        format!(
            "distorted: {improved}/{total} trials improved (worst optimized/initial {worst_ratio:.3}); \
             undistorted: {in_band}/{band_total} optimized RMS within [0.85, 1.15] sigma (range {:.3}..{:.3})",
            band.0, band.1
        ),
    )
}

fn random_ray_through(rng: &mut ChaCha8Rng, p: &Point3, f: f64) -> Ray {
    Ray::through(p, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), f).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng) -> Point3 {
    Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(1.0..20.0))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rel = |a: &Point3, b: &Point3| (a - b).norm() / (1.0 + b.coords.norm());

    // (a) closed form against the SVD solution
    let mut worst_a: f64 = 0.0;
    let mut done = 0;
    while done < 10_000 {
        let p = random_point(&mut rng);
        let f = rng.random_range(0.5..2.0);
        let (ri, rj) = (random_ray_through(&mut rng, &p, f), random_ray_through(&mut rng, &p, f));
        if (ri.s - rj.s).hypot(ri.t - rj.t) < 0.05 {
            continue;
        }
        let closed = intersect_two_rays(&ri, &rj).unwrap();
        let svd = triangulate(&[ri, rj]).unwrap();
        worst_a = worst_a.max(rel(&closed, &svd));
        done += 1;
    }

    // (b) triangulating transformed rays equals transforming the point
    let mut worst_b: f64 = 0.0;
    for _ in 0..3000 {
        let p = random_point(&mut rng);
        let f = rng.random_range(0.5..2.0);
        let n = rng.random_range(3..8);
        let rays: Vec<Ray> = (0..n).map(|_| random_ray_through(&mut rng, &p, f)).collect();
        let q = triangulate(&rays).unwrap();

        let f_new = rng.random_range(0.5..2.0);
        let moved: Vec<Ray> = rays.iter().map(|r| Ray { f: f_new, ..*r }).collect();
        let expect = p1_respace(f, f_new).unwrap().apply(&q);
        worst_b = worst_b.max(rel(&triangulate(&moved).unwrap(), &expect));

        let m = RayOffset::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let moved: Vec<Ray> = rays.iter().map(|r| m.apply(r)).collect();
        let expect = p2_offset(&m, f).unwrap().apply(&q);
        worst_b = worst_b.max(rel(&triangulate(&moved).unwrap(), &expect));

        let (ks, kt, kx) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let k = RayScale::new(ks, kt, kx, kx * kt / ks).unwrap();
        let moved: Vec<Ray> = rays.iter().map(|r| k.apply(r)).collect();
        let expect = p3_scale(&k).unwrap().apply(&q);
        worst_b = worst_b.max(rel(&triangulate(&moved).unwrap(), &expect));
    }

    // (c) analytic Jacobians against central differences
    let cfg = SimConfig {
        view_grid: [3, 3],
        noise_sigma: 0.5,
        distortion: Distortion { k1: -0.05, k2: 0.02, k3: 0.3, k4: -0.2 },
        seed: 66,
        ..reference()
    };
    let (ds, truth) = generate(&cfg).unwrap();
    let theta = ParameterVector::from_parts(&truth.intrinsics, &truth.distortion, &truth.poses);
    let mut worst_c: f64 = 0.0;
    for domain in [ResidualDomain::Rectified, ResidualDomain::Observed] {
        let jac = jacobian_in(&theta, &ds, domain).unwrap();
        let base = theta.as_vector();
        for c in 0..base.len() {
            let h = 1e-6 * base[c].abs().max(1.0);
            let (mut plus, mut minus) = (base.clone(), base.clone());
            plus[c] += h;
            minus[c] -= h;
            let rp = residuals_in(&ParameterVector::from_vector(plus).unwrap(), &ds, domain).unwrap();
            let rm = residuals_in(&ParameterVector::from_vector(minus).unwrap(), &ds, domain).unwrap();
            let fd = (rp - rm) / (2.0 * h);
            let col = jac.column(c);
            worst_c = worst_c.max((&fd - col).norm() / col.norm().max(1.0));
        }
    }

    let pass = worst_a < 1e-9 && worst_b < 1e-9 && worst_c < 1e-5;
    outcome(
        pass,
        format!(
            "(a) 10^4 two-ray instances max rel diff {worst_a:.2e}; (b) 3000 bundles x 3 transforms max rel diff \
             {worst_b:.2e}; (c) Jacobian columns max rel diff {worst_c:.2e}"
        ),
    )
}

fn median_init_time(n_poses: usize, views: u32, runs: usize) -> Duration {
    let cfg = SimConfig { n_poses, view_grid: [views, views], seed: 7, ..reference() };
    let (ds, _) = generate(&cfg).unwrap();
    let mut times: Vec<Duration> = (0..runs)
        .map(|_| {
            let start = Instant::now();
            linear_calibrate(&ds, ds.camera_kind).unwrap();
            start.elapsed()
        })
        .collect();
    times.sort();
    times[runs / 2]
}

fn criterion_7() -> Outcome {
    let t8 = median_init_time(8, 7, 9);
    let t16 = median_init_time(16, 7, 9);
    let big = median_init_time(10, 13, 5);
    let ratio = t16.as_secs_f64() / t8.as_secs_f64();
    let pass = ratio < 2.5 && big < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "median init 8 poses {:.2} ms, 16 poses {:.2} ms (ratio {ratio:.2}); 10 poses x 13x13 views {:.1} ms",
            t8.as_secs_f64() * 1e3,
            t16.as_secs_f64() * 1e3,
            big.as_secs_f64() * 1e3
        ),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("noiseless exact recovery", criterion_1),
        ("noise-level robustness", criterion_2),
        ("pose/view sweep", criterion_3),
        ("linear noise trend", criterion_4),
        ("optimization improvement", criterion_5),
        ("oracle equivalences", criterion_6),
        ("complexity scaling", criterion_7),
    ];
    let mut all = true;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        all &= o.pass;
        println!("criterion {} {}: {} ({})", k + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "criterion 8 real-camera tables: SUBSTITUTED (no plenoptic captures or raw decoding pipeline in a desk-scale \
         setting; covered by criteria 1-7 plus tests/serialization.rs round trips and the CLI determinism tests)"
    );
    if !all {
        std::process::exit(1);
    }
}
