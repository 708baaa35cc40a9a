//! Browser bindings for the static demo in `www/`. Every export returns a
//! flat `Float64Array`; the layouts are documented per function.

use manifold_walk::geometry::{catalog, Manifold};
use manifold_walk::retraction::{ProjectionSettings, RetractionKind, StandardRetraction};
use manifold_walk::sampling::RandomStream;
use manifold_walk::validate::{log_spaced, retraction_order_fit, stationary_density_test, Binning};
use manifold_walk::walk::{run_walk, WalkConfig};
use manifold_walk::{Error, Result};
use wasm_bindgen::prelude::*;

fn retraction_for(m: &Manifold, name: &str) -> Result<RetractionKind> {
    if name.is_empty() {
        return Ok(RetractionKind::default_for(m));
    }
    RetractionKind::from_name(name).ok_or_else(|| Error::InvalidArgument(format!("unknown retraction `{name}`")))
}

/// Ambient coordinates of a walk, three per recorded point (the first
/// three coordinates when the ambient space is bigger).
pub fn walk_xyz(manifold: &str, retraction: &str, eps: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let m = catalog::lookup(manifold)?;
    let kind = retraction_for(&m, retraction)?;
    let mut cfg = WalkConfig::new(eps, steps, kind, seed);
    cfg.record_every = (steps / 20_000).max(1);
    let traj = run_walk(&m, &cfg)?;
    let mut out = Vec::with_capacity(3 * traj.points.len());
    for p in &traj.points {
        let x = m.ambient(&p.point)?;
        out.extend((0..3).map(|k| x.get(k).copied().unwrap_or(0.0)));
    }
    Ok(out)
}

/// `[slope, intercept, τ_1, err_1, τ_2, err_2, ...]`.
pub fn order_fit(manifold: &str, retraction: &str, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let m = catalog::lookup(manifold)?;
    let kind = retraction_for(&m, retraction)?;
    let ret = StandardRetraction::new(kind, ProjectionSettings::default());
    let taus = log_spaced(1e-3, 10f64.powf(-1.5), 8);
    let fit = retraction_order_fit(&m, &ret, trials, &taus, &mut RandomStream::new(seed, 0))?;
    let mut out = vec![fit.slope, fit.intercept];
    for (t, e) in fit.taus.iter().zip(&fit.errors) {
        out.extend([*t, *e]);
    }
    Ok(out)
}

/// Histogram of a chart walk on a `bins × bins` grid of chart 0:
/// `[total variation, samples, observed frequencies..., expected...]`,
/// row-major with the first coordinate slowest.
pub fn density_grid(manifold: &str, eps: f64, steps: usize, bins: usize, seed: u64) -> Result<Vec<f64>> {
    let m = catalog::lookup(manifold)?;
    if !m.is_parameterized() || m.intrinsic_dim() != 2 {
        return Err(Error::InvalidArgument("the density map needs a two-dimensional chart manifold".into()));
    }
    let traj = run_walk(&m, &WalkConfig::new(eps, steps, RetractionKind::ParamChristoffel, seed))?;
    let t = stationary_density_test(&traj, &m, Binning::chart_grid(0, vec![bins, bins]))?;
    let n = t.samples.saturating_sub(t.outside).max(1) as f64;
    let mut out = vec![t.total_variation, t.samples as f64];
    out.extend(t.observed.iter().map(|&c| c as f64 / n));
    out.extend(&t.expected);
    Ok(out)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = manifoldNames)]
pub fn manifold_names() -> Vec<String> {
    catalog::ENTRIES.iter().map(|e| e.name.to_string()).collect()
}

#[wasm_bindgen(js_name = walkXyz)]
pub fn walk_xyz_js(manifold: &str, retraction: &str, eps: f64, steps: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    walk_xyz(manifold, retraction, eps, steps as usize, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = orderFit)]
pub fn order_fit_js(manifold: &str, retraction: &str, trials: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    order_fit(manifold, retraction, trials as usize, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = densityGrid)]
pub fn density_grid_js(manifold: &str, eps: f64, steps: u32, bins: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    density_grid(manifold, eps, steps as usize, bins as usize, seed.into()).map_err(js)
}
