//! Empirical checks of retraction order, harmonicity, generator convergence,
//! heat-kernel decay and the stationary measure.

mod density;
mod heat;
pub mod stats;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Ast};
use crate::geometry::{
    self, metric_and_christoffel_at, AmbientPoint, ChartPoint, CoordinateRange, Manifold,
    ManifoldPoint,
};
use crate::linalg::{self, Mat};
use crate::retraction::{self, pi_ret, ProjectionSettings, Retraction};
use crate::sampling::{self, RandomStream};

pub use density::{
    burn_in_length, cover_time_steps, stationary_density_test, Binning, DensityAccumulator,
    DensityTest,
};
pub use heat::{
    heat_kernel_decay_test, heat_kernel_estimate, heat_kernel_oracle, steps_for_time,
    zonal_harmonic, HeatKernelResult,
};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Outcome of one validation, as written by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub test: String,
    pub parameters: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl ValidationReport {
    pub fn new(
        test: impl Into<String>,
        parameters: serde_json::Value,
        statistic: f64,
        threshold: f64,
        pass: bool,
    ) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            test: test.into(),
            parameters,
            statistic,
            threshold,
            pass,
            details: serde_json::Value::Null,
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }
}

/// A test function given as an expression in the ambient coordinates.
#[derive(Debug, Clone)]
pub struct Observable {
    ast: Ast,
}

impl Observable {
    pub fn parse(text: &str, ambient_dim: usize) -> Result<Self> {
        Ok(Self {
            ast: expr::parse(text, ambient_dim)?,
        })
    }

    pub fn from_ast(ast: Ast) -> Self {
        Self { ast }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.ast.eval(x)?)
    }

    /// Value, gradient and Hessian in ambient coordinates.
    pub fn jet(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Mat)> {
        let j = self.ast.eval_jet(x)?;
        let n = x.len();
        Ok((j.value(), j.grad().to_vec(), Mat::from_rows(n, n, j.hessian_matrix())))
    }
}

/// `n` points from `hi` down to `lo`, equally spaced in `log τ`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (hi.ln(), lo.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Orthonormal basis of `T_xM` in ambient coordinates.
pub fn ambient_tangent_frame(manifold: &Manifold, x: &ManifoldPoint) -> Result<Vec<Vec<f64>>> {
    match x {
        ManifoldPoint::Ambient(p) => geometry::tangent_frame_implicit(manifold, p),
        ManifoldPoint::Chart(p) => {
            let jac = manifold.chart(p.chart)?.map.jets(&p.coords)?.jacobian;
            let cols: Vec<Vec<f64>> = (0..jac.cols()).map(|j| jac.column(j)).collect();
            let frame = linalg::orthonormalize(&cols, 1e-12);
            if frame.len() < cols.len() {
                return Err(Error::DegenerateMetric { min_eigenvalue: 0.0 });
            }
            Ok(frame)
        }
    }
}

/// Metric-orthonormal frame of the tangent space in the point's own representation.
pub fn tangent_frame(manifold: &Manifold, x: &ManifoldPoint) -> Result<Vec<Vec<f64>>> {
    match x {
        ManifoldPoint::Ambient(_) => ambient_tangent_frame(manifold, x),
        ManifoldPoint::Chart(p) => {
            let eig = geometry::metric_at(manifold, p)?.eigen();
            let m = p.coords.len();
            Ok((0..m)
                .map(|i| {
                    let s = 1.0 / eig.values[i].sqrt();
                    (0..m).map(|r| s * eig.vectors[(r, i)]).collect()
                })
                .collect())
        }
    }
}

/// A random point of the manifold: uniform chart coordinates away from
/// interval boundaries, or the end of a short π-Ret walk for implicit manifolds.
pub fn random_point(manifold: &Manifold, rng: &mut RandomStream) -> Result<ManifoldPoint> {
    match &manifold.base_point {
        ManifoldPoint::Chart(base) => {
            let chart = manifold.chart(base.chart)?;
            let coords = chart
                .domain
                .coords
                .iter()
                .map(|r| match *r {
                    CoordinateRange::Periodic { period } => period * rng.uniform(),
                    CoordinateRange::Interval { lo, hi } => {
                        let w = hi - lo;
                        lo + w * (0.1 + 0.8 * rng.uniform())
                    }
                })
                .collect();
            Ok(ManifoldPoint::Chart(ChartPoint::new(base.chart, coords)))
        }
        ManifoldPoint::Ambient(base) => {
            let settings = ProjectionSettings::default();
            let mut eps = 0.3;
            'attempt: loop {
                let mut x = base.clone();
                for _ in 0..60 {
                    let v = sampling::sample_tangent_implicit(manifold, &x, rng)?;
                    match pi_ret(manifold, &x, &linalg::scale(&v, eps), &settings) {
                        Ok(y) => x = y,
                        Err(_) if eps > 1e-3 => {
                            eps *= 0.5;
                            continue 'attempt;
                        }
                        Err(e) => return Err(e),
                    }
                }
                return Ok(ManifoldPoint::Ambient(x));
            }
        }
    }
}

/// Second derivative of `τ ↦ Ret_x(τv)` at 0, split along `T_xM ⊕ N_xM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariantAcceleration {
    /// Components in an orthonormal frame of `T_xM`.
    pub tangential: Vec<f64>,
    pub normal: f64,
}

impl CovariantAcceleration {
    pub fn tangential_norm(&self) -> f64 {
        linalg::norm(&self.tangential)
    }
}

/// Central second difference step for [`covariant_acceleration`].
pub const ACCELERATION_STEP: f64 = 1e-4;

fn second_difference(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    x: &ManifoldPoint,
    x0: &[f64],
    v: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let plus = manifold.ambient(&retraction.retract(manifold, x, &linalg::scale(v, h))?)?;
    let minus = manifold.ambient(&retraction.retract(manifold, x, &linalg::scale(v, -h))?)?;
    Ok((0..x0.len())
        .map(|i| ((plus[i] - x0[i]) + (minus[i] - x0[i])) / (h * h))
        .collect())
}

fn split_tangential(frame: &[Vec<f64>], acc: &[f64]) -> CovariantAcceleration {
    let tangential: Vec<f64> = frame.iter().map(|e| linalg::dot(e, acc)).collect();
    let mut normal = acc.to_vec();
    for (e, c) in frame.iter().zip(&tangential) {
        for (ni, ei) in normal.iter_mut().zip(e) {
            *ni -= c * ei;
        }
    }
    CovariantAcceleration {
        tangential,
        normal: linalg::norm(&normal),
    }
}

/// `(Ret_x(hv) − 2x + Ret_x(−hv))/h²` with `h = 1e-4`, decomposed into
/// tangential and normal parts at `x`.
pub fn covariant_acceleration(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    x: &ManifoldPoint,
    v: &[f64],
) -> Result<CovariantAcceleration> {
    let x0 = manifold.ambient(x)?;
    let acc = second_difference(manifold, retraction, x, &x0, v, ACCELERATION_STEP)?;
    Ok(split_tangential(&ambient_tangent_frame(manifold, x)?, &acc))
}

/// Like [`covariant_acceleration`], with Richardson extrapolation over `h`
/// and `h/2` to remove the `O(h²)` truncation term. Averages over many
/// directions need this, since the truncation term does not average out on
/// curved manifolds.
pub fn covariant_acceleration_extrapolated(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    x: &ManifoldPoint,
    v: &[f64],
) -> Result<CovariantAcceleration> {
    let x0 = manifold.ambient(x)?;
    let h = 4.0 * ACCELERATION_STEP;
    let coarse = second_difference(manifold, retraction, x, &x0, v, h)?;
    let fine = second_difference(manifold, retraction, x, &x0, v, 0.5 * h)?;
    let acc: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    Ok(split_tangential(&ambient_tangent_frame(manifold, x)?, &acc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    /// Strictly decreasing.
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// For each `τ`, the largest `‖Ret_x(τv) − Exp_x(τv)‖` over `trials` random
/// unit `(x, v)`, and the log-log slope of those errors. Exp is the closed
/// form when the manifold has one and RK4 on the geodesic equation otherwise.
pub fn retraction_order_fit(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    trials: usize,
    taus: &[f64],
    rng: &mut RandomStream,
) -> Result<OrderFit> {
    if taus.len() < 2 || taus.windows(2).any(|w| !(w[1] < w[0])) || taus[taus.len() - 1] <= 0.0 {
        return Err(Error::InvalidArgument(
            "tau grid must be positive and strictly decreasing".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is needed".into()));
    }
    let mut pairs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = random_point(manifold, rng)?;
        let v = sampling::sample_tangent(manifold, &x, rng)?;
        pairs.push((x, v));
    }
    let mut errors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut worst: f64 = 0.0;
        for (x, v) in &pairs {
            let r = retraction.retract(manifold, x, &linalg::scale(v, tau))?;
            let e = retraction::exp_reference(manifold, x, v, tau)?;
            let d = linalg::norm(&linalg::sub(&manifold.ambient(&r)?, &manifold.ambient(&e)?));
            worst = worst.max(d);
        }
        errors.push(worst);
    }
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let (slope, intercept) = stats::linear_fit(&lx, &ly);
    Ok(OrderFit {
        taus: taus.to_vec(),
        errors,
        slope,
        intercept,
    })
}

/// How to average over the unit tangent sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Quadrature {
    /// `K` equally spaced angles in a metric-orthonormal frame (`m ≤ 2`).
    AngleGrid { points: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageEstimate {
    pub value: f64,
    /// Zero for deterministic quadrature.
    pub stderr: f64,
}

fn unit_tangents(
    manifold: &Manifold,
    x: &ManifoldPoint,
    quadrature: Quadrature,
) -> Result<Vec<Vec<f64>>> {
    let frame = tangent_frame(manifold, x)?;
    let m = frame.len();
    match quadrature {
        Quadrature::AngleGrid { points } => {
            if points == 0 {
                return Err(Error::InvalidArgument("quadrature needs at least one point".into()));
            }
            match m {
                1 => Ok(vec![frame[0].clone(), linalg::scale(&frame[0], -1.0)]),
                2 => Ok((0..points)
                    .map(|j| {
                        let a = 2.0 * PI * j as f64 / points as f64;
                        linalg::add(&linalg::scale(&frame[0], a.cos()), &linalg::scale(&frame[1], a.sin()))
                    })
                    .collect()),
                _ => Err(Error::InvalidArgument(format!(
                    "angle-grid quadrature needs dimension ≤ 2, manifold has {m}; use Monte Carlo"
                ))),
            }
        }
        Quadrature::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
            }
            let mut rng = RandomStream::new(seed, 0);
            (0..samples)
                .map(|_| sampling::sample_tangent(manifold, x, &mut rng))
                .collect()
        }
    }
}

/// `(U^ε f)(x)`: average of `f(Ret_x(εv))` over unit tangents `v`.
pub fn transition_operator(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &ManifoldPoint,
    epsilon: f64,
    quadrature: Quadrature,
) -> Result<AverageEstimate> {
    if epsilon == 0.0 {
        return Ok(AverageEstimate {
            value: f(&manifold.ambient(x)?)?,
            stderr: 0.0,
        });
    }
    let dirs = unit_tangents(manifold, x, quadrature)?;
    let values = dirs
        .iter()
        .map(|v| {
            let y = retraction.retract(manifold, x, &linalg::scale(v, epsilon))?;
            f(&manifold.ambient(&y)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    match quadrature {
        Quadrature::AngleGrid { .. } => Ok(AverageEstimate {
            value: values.iter().sum::<f64>() / values.len() as f64,
            stderr: 0.0,
        }),
        Quadrature::MonteCarlo { .. } => {
            let (value, stderr) = stats::mean_and_stderr(&values);
            Ok(AverageEstimate { value, stderr })
        }
    }
}

/// Laplace–Beltrami operator of an ambient observable restricted to `M`.
///
/// Charts: `g^{ij}(∂_ij F − Γ^k_ij ∂_k F)` with `F = f∘φ`. Implicit
/// manifolds: `tr_T Hess f + ∇f·H`, `H = −dfᵀ(df dfᵀ)⁻¹(tr_T Hess f_c)_c`
/// the mean curvature vector.
pub fn laplace_beltrami(manifold: &Manifold, f: &Observable, x: &ManifoldPoint) -> Result<f64> {
    match x {
        ManifoldPoint::Chart(p) => {
            let chart = manifold.chart(p.chart)?;
            let (jet, hess_phi) = geometry::second_derivatives(chart.map.as_ref(), &p.coords)?;
            let (g, gamma) = metric_and_christoffel_at(manifold, p)?;
            let (_, grad, hess) = f.jet(&jet.value)?;
            let m = g.dim();
            let dphi = &jet.jacobian;
            let cols: Vec<Vec<f64>> = (0..m).map(|j| dphi.column(j)).collect();
            let dfdx: Vec<f64> = cols.iter().map(|c| linalg::dot(&grad, c)).collect();
            let ginv = g.inverse()?;
            let mut lap = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let second_phi: f64 = hess_phi.iter().enumerate().map(|(a, h)| grad[a] * h[(i, j)]).sum();
                    let fij = hess.bilinear(&cols[i], &cols[j]) + second_phi;
                    let christ: f64 = (0..m).map(|k| gamma.get(k, i, j) * dfdx[k]).sum();
                    lap += ginv[(i, j)] * (fij - christ);
                }
            }
            Ok(lap)
        }
        ManifoldPoint::Ambient(p) => {
            let c = manifold.constraint()?;
            let (cjet, chess) = geometry::second_derivatives(c, &p.coords)?;
            let frame = geometry::tangent_frame_implicit(manifold, p)?;
            let (_, grad, hess) = f.jet(&p.coords)?;
            let trace = |h: &Mat| frame.iter().map(|e| h.bilinear(e, e)).sum::<f64>();
            let q: Vec<f64> = chess.iter().map(trace).collect();
            let mean_curv = retraction::normal_combination(&cjet.jacobian, &q)?;
            Ok(trace(&hess) - linalg::dot(&grad, &mean_curv))
        }
    }
}

/// `max_x |(m/ε²)(U^ε f(x) − f(x)) − ½ Δ_g f(x)|` over the sample points.
///
/// The factor `m` is the variance normalization of a unit step drawn
/// uniformly from the `(m−1)`-sphere: `E[(v·e)²] = 1/m`.
pub fn generator_error(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    f: &Observable,
    points: &[ManifoldPoint],
    epsilon: f64,
    quadrature: Quadrature,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let m = manifold.intrinsic_dim() as f64;
    let eval = |y: &[f64]| f.value(y);
    let mut worst: f64 = 0.0;
    for x in points {
        let u = transition_operator(manifold, retraction, &eval, x, epsilon, quadrature)?;
        let fx = f.value(&manifold.ambient(x)?)?;
        let lhs = m / (epsilon * epsilon) * (u.value - fx);
        let rhs = 0.5 * laplace_beltrami(manifold, f, x)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `max` and Monte Carlo average of the tangential covariant acceleration
/// over random points and directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationSummary {
    pub points: usize,
    pub max_tangential: f64,
    pub mean_tangential: f64,
    pub min_tangential: f64,
    pub max_normal: f64,
}

pub fn acceleration_survey(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    points: usize,
    rng: &mut RandomStream,
) -> Result<AccelerationSummary> {
    let mut max_t: f64 = 0.0;
    let mut min_t = f64::INFINITY;
    let mut sum_t = 0.0;
    let mut max_n: f64 = 0.0;
    for _ in 0..points {
        let x = random_point(manifold, rng)?;
        let v = sampling::sample_tangent(manifold, &x, rng)?;
        let a = covariant_acceleration(manifold, retraction, &x, &v)?;
        let t = a.tangential_norm();
        max_t = max_t.max(t);
        min_t = min_t.min(t);
        sum_t += t;
        max_n = max_n.max(a.normal);
    }
    Ok(AccelerationSummary {
        points,
        max_tangential: max_t,
        mean_tangential: sum_t / points as f64,
        min_tangential: min_t,
        max_normal: max_n,
    })
}

/// Monte Carlo mean over unit tangents of the tangential covariant
/// acceleration at `x` (components in an orthonormal frame, extrapolated
/// differences), with per-component standard errors.
pub fn averaged_acceleration(
    manifold: &Manifold,
    retraction: &dyn Retraction,
    x: &ManifoldPoint,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut comps: Vec<Vec<f64>> = Vec::new();
    for _ in 0..samples {
        let v = sampling::sample_tangent(manifold, x, rng)?;
        let a = covariant_acceleration_extrapolated(manifold, retraction, x, &v)?;
        if comps.is_empty() {
            comps = vec![Vec::with_capacity(samples); a.tangential.len()];
        }
        for (c, t) in comps.iter_mut().zip(&a.tangential) {
            c.push(*t);
        }
    }
    Ok(comps.iter().map(|c| stats::mean_and_stderr(c)).unzip())
}

/// Ambient point helper for tests and examples.
pub fn ambient_point(coords: &[f64]) -> ManifoldPoint {
    ManifoldPoint::Ambient(AmbientPoint::new(coords.to_vec()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::catalog;
    use crate::retraction::{RetractionKind, StandardRetraction};

    /// `x ↦ normalize(x + v + 0.1‖v‖²e₁)`: a first-order retraction of the
    /// unit sphere whose acceleration has a tangential part.
    pub(crate) struct Skewed;

    impl Retraction for Skewed {
        fn retract(&self, manifold: &Manifold, x: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
            let x = manifold.ambient(x)?;
            let vv = linalg::dot(v, v);
            let mut y = linalg::add(&x, v);
            y[0] += 0.1 * vv;
            let r = linalg::norm(&y);
            Ok(ambient_point(&linalg::scale(&y, 1.0 / r)))
        }

        fn name(&self) -> String {
            "skewed".into()
        }
    }

    fn piret() -> StandardRetraction {
        StandardRetraction::new(RetractionKind::ProjectNewton, ProjectionSettings::default())
    }

    fn pret() -> StandardRetraction {
        StandardRetraction::new(RetractionKind::ParamChristoffel, ProjectionSettings::default())
    }

    fn exact() -> StandardRetraction {
        StandardRetraction::new(RetractionKind::ExactExp, ProjectionSettings::default())
    }

    #[test]
    fn log_spaced_grid_decreases() {
        let t = log_spaced(1e-3, 10f64.powf(-1.5), 8);
        assert_eq!(t.len(), 8);
        assert!((t[0] - 10f64.powf(-1.5)).abs() < 1e-15);
        assert!((t[7] - 1e-3).abs() < 1e-17);
        assert!(t.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn sphere_piret_acceleration_is_normal() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let x = ambient_point(&[0.0, 0.6, 0.8]);
        let a = covariant_acceleration(&m, &piret(), &x, &[1.0, 0.0, 0.0]).unwrap();
        assert!(a.tangential_norm() <= 1e-6, "{:?}", a);
        assert!((a.normal - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_torus_acceleration_vanishes() {
        let m = catalog::lookup("flat-torus").unwrap();
        let x = ManifoldPoint::Chart(ChartPoint::new(0, vec![0.3, 0.9]));
        let a = covariant_acceleration(&m, &pret(), &x, &[0.6, 0.8]).unwrap();
        assert!(a.tangential_norm() <= 1e-8 && a.normal <= 1e-8);
    }

    #[test]
    fn skewed_retraction_has_tangential_acceleration() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let x = ambient_point(&[0.0, 0.0, 1.0]);
        let a = covariant_acceleration(&m, &Skewed, &x, &[0.0, 1.0, 0.0]).unwrap();
        // 0.2·e₁ projected to the tangent plane at the north pole
        assert!((a.tangential_norm() - 0.2).abs() < 1e-6);
    }

    #[test]
    fn order_fits() {
        let mut rng = RandomStream::new(1, 0);
        let taus = log_spaced(1e-3, 10f64.powf(-1.5), 8);
        let s2 = catalog::lookup("sphere:dim=2").unwrap();
        let fit = retraction_order_fit(&s2, &piret(), 8, &taus, &mut rng).unwrap();
        assert!(fit.slope > 2.7 && fit.slope < 3.3, "{fit:?}");
        let skew = retraction_order_fit(&s2, &Skewed, 8, &taus, &mut rng).unwrap();
        assert!(skew.slope <= 2.3, "{skew:?}");
        let flat = catalog::lookup("flat-torus").unwrap();
        let fit = retraction_order_fit(&flat, &pret(), 8, &taus, &mut rng).unwrap();
        assert!(fit.errors.iter().all(|e| *e <= 1e-14), "{fit:?}");
        let ell = catalog::lookup("ellipsoid").unwrap();
        let fit = retraction_order_fit(&ell, &piret(), 4, &taus, &mut rng).unwrap();
        assert!(fit.slope > 2.7 && fit.slope < 3.3, "{fit:?}");
    }

    #[test]
    fn transition_operator_basics() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let x = ambient_point(&[0.0, 0.0, 1.0]);
        let one = |_: &[f64]| Ok(1.0);
        let z = |y: &[f64]| Ok(y[2]);
        let grid = Quadrature::AngleGrid { points: 256 };
        assert_eq!(transition_operator(&m, &piret(), &one, &x, 0.1, grid).unwrap().value, 1.0);
        assert_eq!(transition_operator(&m, &piret(), &z, &x, 0.0, grid).unwrap().value, 1.0);
        let e = 0.3;
        let u = transition_operator(&m, &exact(), &z, &x, e, grid).unwrap();
        assert!((u.value - e.cos()).abs() < 1e-14);
        let mc = Quadrature::MonteCarlo { samples: 200, seed: 3 };
        let u = transition_operator(&m, &exact(), &z, &x, e, mc).unwrap();
        assert!((u.value - e.cos()).abs() < 1e-13 && u.stderr < 1e-12);
    }

    #[test]
    fn laplacians_match_eigenfunctions() {
        let s2 = catalog::lookup("sphere:dim=2").unwrap();
        let z = Observable::parse("z", 3).unwrap();
        let lap = laplace_beltrami(&s2, &z, &ambient_point(&[0.0, 0.0, 1.0])).unwrap();
        assert!((lap + 2.0).abs() < 1e-14);
        let y2 = Observable::parse("z^2 - 1/3", 3).unwrap();
        let p = [0.48, 0.6, 0.64];
        let lap = laplace_beltrami(&s2, &y2, &ambient_point(&p)).unwrap();
        assert!((lap + 6.0 * (p[2] * p[2] - 1.0 / 3.0)).abs() < 1e-13);

        // same function through the two-chart parameterization
        let sp = catalog::lookup("sphere-param").unwrap();
        let q = ManifoldPoint::Chart(ChartPoint::new(1, vec![1.1, 2.0]));
        let zq = sp.ambient(&q).unwrap()[2];
        let lap = laplace_beltrami(&sp, &y2, &q).unwrap();
        assert!((lap + 6.0 * (zq * zq - 1.0 / 3.0)).abs() < 1e-12);

        let flat = catalog::lookup("flat-torus").unwrap();
        let s = Observable::parse("sin(2 pi x)", 2).unwrap();
        let pt = ManifoldPoint::Chart(ChartPoint::new(0, vec![0.1, 0.4]));
        let lap = laplace_beltrami(&flat, &s, &pt).unwrap();
        let expected = -4.0 * PI * PI * (2.0 * PI * 0.1).sin();
        assert!((lap - expected).abs() < 1e-12);

        let c = Observable::parse("3", 3).unwrap();
        let torus = catalog::lookup("torus").unwrap();
        let tp = ManifoldPoint::Chart(ChartPoint::new(0, vec![0.3, 1.0]));
        assert_eq!(laplace_beltrami(&torus, &c, &tp).unwrap(), 0.0);
    }

    #[test]
    fn generator_error_of_the_exact_walk() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let z = Observable::parse("z", 3).unwrap();
        let north = ambient_point(&[0.0, 0.0, 1.0]);
        let grid = Quadrature::AngleGrid { points: 256 };
        let e = 0.05;
        let err = generator_error(&m, &exact(), &z, &[north.clone()], e, grid).unwrap();
        let expected = (2.0 / (e * e) * (e.cos() - 1.0) + 1.0).abs();
        assert!((err - expected).abs() < 1e-9, "{err} vs {expected}");
        assert!((err - 2.1e-4).abs() < 1e-5);
        let c = Observable::parse("1", 3).unwrap();
        assert_eq!(generator_error(&m, &piret(), &c, &[north], 0.1, grid).unwrap(), 0.0);
    }

    #[test]
    fn piret_generator_error_decreases() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let f = Observable::parse("z", 3).unwrap();
        let mut rng = RandomStream::new(4, 0);
        let pts: Vec<_> = (0..4).map(|_| random_point(&m, &mut rng).unwrap()).collect();
        let grid = Quadrature::AngleGrid { points: 256 };
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| generator_error(&m, &piret(), &f, &pts, e, grid).unwrap())
            .collect();
        assert!(errs[0] / errs[1] >= 1.5 && errs[1] / errs[2] >= 1.5, "{errs:?}");
    }

    #[test]
    fn averaged_acceleration_vanishes() {
        let mut rng = RandomStream::new(8, 0);
        let cases = [
            ("ellipsoid", piret(), ambient_point(&[0.0, 0.0, 0.6])),
            ("torus", pret(), ManifoldPoint::Chart(ChartPoint::new(0, vec![0.8, 2.0]))),
        ];
        for (name, ret, x) in cases {
            let m = catalog::lookup(name).unwrap();
            let (mean, se) = averaged_acceleration(&m, &ret, &x, 2000, &mut rng).unwrap();
            let norm = linalg::norm(&mean);
            // floor for rounding in the differences
            let bound = 3.0 * linalg::norm(&se) + 1e-8;
            assert!(norm <= bound, "{name}: {mean:?} vs {se:?}");
        }
        // Newton stops at a fixed residual, which leaves a small even-order bias
        let g2 = catalog::lookup("genus2").unwrap();
        let (mean, _) = averaged_acceleration(&g2, &piret(), &ambient_point(&[1.0, 0.0, 0.1]), 500, &mut rng).unwrap();
        assert!(linalg::norm(&mean) < 1e-6, "{mean:?}");
        let s2 = catalog::lookup("sphere:dim=2").unwrap();
        let (mean, _) = averaged_acceleration(&s2, &Skewed, &ambient_point(&[0.0, 0.0, 1.0]), 200, &mut rng).unwrap();
        assert!((linalg::norm(&mean) - 0.2).abs() < 1e-6);
    }
}
