//! Acceptance checks, one PASS/FAIL line each. Pass substrings of the check
//! names (`c1-order`, `c4-heat`, ...) to run a subset.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use manifold_walk::geometry::catalog;
use manifold_walk::retraction::{ProjectionSettings, RetractionKind, StandardRetraction};
use manifold_walk::sampling::RandomStream;
use manifold_walk::validate::{
    self, acceleration_survey, cover_time_steps, generator_error, heat_kernel_estimate, heat_kernel_oracle,
    log_spaced, random_point, retraction_order_fit, stationary_density_test, Binning, Observable, Quadrature,
};
use manifold_walk::walk::{self, map_ensemble, run_walk, WalkConfig};
use manifold_walk::Result;

type Check = fn() -> Result<(bool, String)>;

fn std_ret(kind: RetractionKind) -> StandardRetraction {
    StandardRetraction::new(kind, ProjectionSettings::default())
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn c1_order() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let taus = log_spaced(1e-3, 10f64.powf(-1.5), 8);
    let sphere = catalog::lookup("sphere:dim=2")?;
    let torus = catalog::lookup("torus:R=1.1")?;
    let mut rng = RandomStream::new(1, 0);
    let a = retraction_order_fit(&sphere, &std_ret(RetractionKind::ProjectNewton), 32, &taus, &mut rng)?;
    let b = retraction_order_fit(&torus, &std_ret(RetractionKind::ParamChristoffel), 32, &taus, &mut rng)?;
    let elapsed = t0.elapsed();
    let band = |s: f64| (2.7..=3.3).contains(&s);
    Ok((
        band(a.slope) && band(b.slope) && elapsed < Duration::from_secs(10),
        format!(
            "slope piret/sphere {:.4}, pret/torus {:.4} (need [2.7, 3.3]); {}",
            a.slope,
            b.slope,
            secs(elapsed)
        ),
    ))
}

/// The order fit on a further manifold, and its power to reject a
/// first-order retraction.
fn c1b_order_discrimination() -> Result<(bool, String)> {
    let taus = log_spaced(1e-3, 10f64.powf(-1.5), 8);
    let ellipsoid = catalog::lookup("ellipsoid")?;
    let sphere = catalog::lookup("sphere:dim=2")?;
    let mut rng = RandomStream::new(1, 1);
    let a = retraction_order_fit(&ellipsoid, &std_ret(RetractionKind::ProjectNewton), 32, &taus, &mut rng)?;
    let b = retraction_order_fit(&sphere, &common::Skewed, 32, &taus, &mut rng)?;
    Ok((
        (2.7..=3.3).contains(&a.slope) && b.slope <= 2.3,
        format!("slope piret/ellipsoid {:.4} (need [2.7, 3.3]); broken/sphere {:.4} (need <= 2.3)", a.slope, b.slope),
    ))
}

fn c2_acceleration() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let sphere = catalog::lookup("sphere:dim=2")?;
    let torus = catalog::lookup("torus:R=1.1")?;
    let mut rng = RandomStream::new(2, 0);
    let a = acceleration_survey(&sphere, &std_ret(RetractionKind::ProjectNewton), 100, &mut rng)?;
    let b = acceleration_survey(&torus, &std_ret(RetractionKind::ParamChristoffel), 100, &mut rng)?;
    let c = acceleration_survey(&sphere, &common::Skewed, 100, &mut rng)?;
    let elapsed = t0.elapsed();
    Ok((
        a.max_tangential <= 1e-5
            && b.max_tangential <= 1e-5
            && c.min_tangential >= 1e-2
            && elapsed < Duration::from_secs(5),
        format!(
            "max piret/sphere {:.2e}, pret/torus {:.2e} (need <= 1e-5); min broken {:.3e} (need >= 1e-2); {}",
            a.max_tangential,
            b.max_tangential,
            c.min_tangential,
            secs(elapsed)
        ),
    ))
}

fn c3_generator() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let sphere = catalog::lookup("sphere:dim=2")?;
    let ret = std_ret(RetractionKind::ProjectNewton);
    let mut rng = RandomStream::new(3, 0);
    let mut points = vec![sphere.base_point.clone(), validate::ambient_point(&[0.0, 0.0, -1.0])];
    for _ in 0..30 {
        points.push(random_point(&sphere, &mut rng)?);
    }
    let grid = Quadrature::AngleGrid { points: 256 };
    let mut pass = true;
    let mut parts = Vec::new();
    for text in ["z", "z^2 - 1/3"] {
        let f = Observable::parse(text, 3)?;
        let errs = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| generator_error(&sphere, &ret, &f, &points, e, grid))
            .collect::<Result<Vec<f64>>>()?;
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
        pass &= ratios.iter().all(|&r| r >= 1.5) && errs[2] <= 5e-3;
        parts.push(format!(
            "f = {text}: errors {:.2e} {:.2e} {:.2e}, ratios {:.2} {:.2}",
            errs[0], errs[1], errs[2], ratios[0], ratios[1]
        ));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    Ok((pass, format!("{}; {}", parts.join("; "), secs(elapsed))))
}

fn heat(steps: usize, time: f64) -> Result<(bool, String)> {
    let t0 = Instant::now();
    let sphere = catalog::lookup("sphere:dim=2")?;
    let cfg = WalkConfig::new(0.02, steps, RetractionKind::ProjectNewton, 4);
    let r = heat_kernel_estimate(&sphere, &cfg, 50_000, 1, time, walk::thread_count())?;
    let target = heat_kernel_oracle(1, 0.5, 1.0);
    let dev = (r.estimate - target).abs();
    Ok((
        dev <= 0.012,
        format!(
            "N = {steps}: mean z {:.5} +- {:.5}, e^-0.5 = {:.5}, |diff| {:.4} (need <= 0.012), {} restarts; {}",
            r.estimate,
            r.stderr,
            target,
            dev,
            r.restarts,
            secs(t0.elapsed())
        ),
    ))
}

/// The stated recipe, `N = 1250` steps of size 0.02.
fn c4_heat() -> Result<(bool, String)> {
    heat(1250, 0.5)
}

/// Same target with `N = m·t/ε²`: a unit step uniform on the tangent circle
/// advances Brownian time by `ε²/m`, not `ε²`.
fn c4b_heat_rescaled() -> Result<(bool, String)> {
    heat(validate::steps_for_time(2, 0.5, 0.02), 0.5)
}

fn c5_density() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let flat = catalog::lookup("flat-torus")?;
    let cfg = WalkConfig::new(0.25, 111_111, RetractionKind::ParamChristoffel, 5);
    let traj = run_walk(&flat, &cfg)?;
    let a = stationary_density_test(&traj, &flat, Binning::chart_grid(0, vec![16, 16]))?;

    let torus = catalog::lookup("torus:R=1.1")?;
    let cfg = WalkConfig::new(0.1, 1_111_111, RetractionKind::ParamChristoffel, 5);
    let traj = run_walk(&torus, &cfg)?;
    let b = stationary_density_test(
        &traj,
        &torus,
        Binning::ChartGrid {
            chart: 0,
            axes: vec![0],
            bins: vec![32],
        },
    )?;
    // the marginal oracle of s, integrated per bin
    let h = 2.0 * PI / 32.0;
    let oracle_gap = b
        .expected
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (lo, hi) = (k as f64 * h, (k + 1) as f64 * h);
            (p - (1.1 * h + hi.sin() - lo.sin()) / (2.0 * PI * 1.1)).abs()
        })
        .fold(0.0, f64::max);
    Ok((
        a.total_variation <= 0.05
            && a.samples == 100_000
            && a.observed.len() == 256
            && b.total_variation <= 0.05
            && b.samples == 1_000_000
            && oracle_gap < 1e-6,
        format!(
            "flat torus TV {:.4} over {} samples / {} bins; torus s-marginal TV {:.4} over {} samples / 32 bins; {}",
            a.total_variation,
            a.samples,
            a.observed.len(),
            b.total_variation,
            b.samples,
            secs(t0.elapsed())
        ),
    ))
}

fn c6_genus2() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let g2 = catalog::lookup("genus2")?;
    let eps = 0.1;
    let traj = run_walk(&g2, &WalkConfig::new(eps, 100_000, RetractionKind::ProjectNewton, 7))?;
    let elapsed = t0.elapsed();
    let mut worst: f64 = 0.0;
    for p in &traj.points {
        worst = worst.max(g2.constraint_residual(&g2.ambient(&p.point)?)?);
    }
    Ok((
        traj.restarts.is_empty()
            && traj.points.len() == 100_001
            && worst <= eps * eps * eps
            && elapsed < Duration::from_secs(60),
        format!(
            "{} restarts, {} points, max |f|/sigma_min {:.2e} (need <= 1e-3); {}",
            traj.restarts.len(),
            traj.points.len(),
            worst,
            secs(elapsed)
        ),
    ))
}

fn c7_cover_time() -> Result<(bool, String)> {
    let a = cover_time_steps(2, 1.0, 0.01, 0.1)?;
    let b = cover_time_steps(3, 1.0, 0.1, 0.1)?;
    Ok((a == 1351 && b == 1100, format!("m = 2: {a} (need 1351); m = 3: {b} (need 1100)")))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("readable temp dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("readable file"))
        })
        .collect();
    v.sort();
    v
}

fn c8_determinism() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let bin = env!("CARGO_BIN_EXE_manifold-walk");
    let runs: &[&[&str]] = &[
        &["walk", "--manifold", "genus2", "--retraction", "piret", "--eps", "0.1", "--steps", "3000", "--seed", "7", "--out", "g.csv"],
        &["walk", "--manifold", "sphere-param", "--eps", "0.2", "--steps", "3000", "--record-every", "7", "--out", "s.csv"],
        &["ensemble", "--manifold", "sphere:dim=2", "--walkers", "48", "--steps", "40", "--seed", "3", "--out", "e.csv"],
        &["validate", "order", "--manifold", "ellipsoid", "--trials", "8", "--out", "order.json"],
        &["validate", "generator", "--manifold", "sphere:dim=2", "--points", "4", "--out", "gen.json"],
        &["validate", "accel", "--manifold", "torus", "--points", "20", "--out", "accel.json"],
        &["validate", "heat", "--manifold", "sphere:dim=2", "--walkers", "300", "--eps", "0.1", "--out", "heat.json"],
        &["validate", "density", "--manifold", "flat-torus", "--eps", "0.25", "--steps", "20000", "--bins", "8,8", "--out", "dens.json"],
        &["covertime", "--manifold", "torus", "--eps", "0.1", "--out", "cover.json"],
    ];
    let mut mismatches = Vec::new();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().map_err(manifold_walk::Error::from)?;
        for args in runs {
            let status = Command::new(bin)
                .args(*args)
                .current_dir(dir.path())
                .env(walk::THREADS_ENV, threads)
                .output()
                .map_err(manifold_walk::Error::from)?;
            if !status.status.success() {
                mismatches.push(format!("`{}` exited with {}", args.join(" "), status.status));
            }
        }
        outputs.push(files(dir.path()));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    if a.len() != b.len() {
        mismatches.push("different sets of files".into());
    }
    for ((na, ca), (nb, cb)) in a.iter().zip(b) {
        if na != nb || ca != cb {
            mismatches.push(format!("{na} differs"));
        }
    }
    // schedule independence of the library ensemble
    let sphere = catalog::lookup("sphere:dim=2")?;
    let cfg = WalkConfig::new(0.1, 30, RetractionKind::ProjectNewton, 11);
    let one = map_ensemble(&sphere, &cfg, 40, 1, |_, t| t)?;
    let many = map_ensemble(&sphere, &cfg, 40, 4, |_, t| t)?;
    if one != many {
        mismatches.push("map_ensemble depends on the thread count".into());
    }
    Ok((
        mismatches.is_empty() && a.len() >= runs.len(),
        if mismatches.is_empty() {
            format!("{} output files byte-identical across two runs (1 and 3 threads); {}", a.len(), secs(t0.elapsed()))
        } else {
            mismatches.join("; ")
        },
    ))
}

fn main() {
    let checks: &[(&str, &str, Check)] = &[
        ("c1-order", "third-order agreement with Exp", c1_order),
        ("c1b-order-discrimination", "order fit on the ellipsoid and a broken retraction", c1b_order_discrimination),
        ("c2-accel", "second-order detector", c2_acceleration),
        ("c3-generator", "generator convergence", c3_generator),
        ("c4-heat", "heat-kernel decay, stated recipe", c4_heat),
        ("c4b-heat-rescaled", "heat-kernel decay, N = m t / eps^2", c4b_heat_rescaled),
        ("c5-density", "stationary measure", c5_density),
        ("c6-genus2", "genus-two walk, 100 000 steps", c6_genus2),
        ("c7-cover-time", "cover-time arithmetic", c7_cover_time),
        ("c8-determinism", "byte-identical reruns", c8_determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let (pass, detail) = match outcome {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {id} ({title}): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
