use serde::{Deserialize, Serialize};

use super::stats;
use crate::error::{Error, Result};
use crate::geometry::{ExpOracle, Manifold};
use crate::linalg;
use crate::walk::{map_ensemble, WalkConfig};

/// Monic Legendre polynomial of degree `l` at `c`: the zonal spherical
/// harmonic on `S²` (`1`, `c`, `c² − 1/3`, ...).
pub fn zonal_harmonic(l: usize, c: f64) -> f64 {
    // Bonnet recursion, then divide by the leading coefficient (2l)!/(2^l (l!)²)
    let (mut p0, mut p1) = (1.0, c);
    if l == 0 {
        return 1.0;
    }
    let mut lead = 1.0;
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * c * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
        lead *= (2.0 * kf + 1.0) / (kf + 1.0);
    }
    p1 / lead
}

/// `E[Y_l(X_t)] = e^{−l(l+1)t/2} Y_l(x₀)` for Brownian motion with generator `½Δ` on `S²`.
pub fn heat_kernel_oracle(l: usize, t: f64, y0: f64) -> f64 {
    let lf = l as f64;
    (-lf * (lf + 1.0) * t / 2.0).exp() * y0
}

/// Steps for Brownian time `t`: `round(m·t/ε²)`. A unit step uniform on the
/// `(m−1)`-sphere moves each coordinate with variance `ε²/m`, so one step
/// advances Brownian time by `ε²/m`.
pub fn steps_for_time(m: usize, t: f64, epsilon: f64) -> usize {
    (m as f64 * t / (epsilon * epsilon)).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelResult {
    pub degree: usize,
    pub walkers: usize,
    pub steps: usize,
    pub epsilon: f64,
    /// Brownian time the oracle is evaluated at.
    pub time: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub restarts: usize,
}

impl HeatKernelResult {
    pub fn deviation(&self) -> f64 {
        (self.estimate - self.oracle).abs()
    }
}

fn check_sphere(manifold: &Manifold) -> Result<()> {
    if manifold.exp_oracle != ExpOracle::Sphere || manifold.intrinsic_dim() != 2 {
        return Err(Error::InvalidArgument(
            "heat-kernel test needs the unit 2-sphere".into(),
        ));
    }
    Ok(())
}

/// Mean of `Y_l(⟨X_N, x₀⟩)` over `walkers` walks of exactly `cfg.steps`
/// steps, against the oracle at Brownian time `time`.
pub fn heat_kernel_estimate(
    manifold: &Manifold,
    cfg: &WalkConfig,
    walkers: usize,
    degree: usize,
    time: f64,
    threads: usize,
) -> Result<HeatKernelResult> {
    check_sphere(manifold)?;
    let start = cfg.start.clone().unwrap_or_else(|| manifold.base_point.clone());
    let x0 = manifold.ambient(&start)?;
    let mut cfg = cfg.clone();
    cfg.start = Some(start);
    cfg.record_every = cfg.steps.max(1);
    let results = map_ensemble(manifold, &cfg, walkers, threads, |_, t| {
        let c = manifold
            .ambient(t.final_point())
            .map(|x| linalg::dot(&x, &x0))
            .unwrap_or(f64::NAN);
        (zonal_harmonic(degree, c), t.restarts.len())
    })?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (estimate, stderr) = stats::mean_and_stderr(&values);
    Ok(HeatKernelResult {
        degree,
        walkers,
        steps: cfg.steps,
        epsilon: cfg.epsilon,
        time,
        estimate,
        stderr,
        oracle: heat_kernel_oracle(degree, time, zonal_harmonic(degree, 1.0)),
        restarts: results.iter().map(|r| r.1).sum(),
    })
}

/// Runs walks to Brownian time `t` (see [`steps_for_time`]) and compares
/// the mean zonal harmonic with its exact decay.
pub fn heat_kernel_decay_test(
    manifold: &Manifold,
    cfg: &WalkConfig,
    walkers: usize,
    degree: usize,
    t: f64,
    threads: usize,
) -> Result<HeatKernelResult> {
    let mut cfg = cfg.clone();
    cfg.steps = steps_for_time(manifold.intrinsic_dim(), t, cfg.epsilon);
    heat_kernel_estimate(manifold, &cfg, walkers, degree, t, threads)
}
