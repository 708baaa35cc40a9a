//! Points, charts, metrics and Christoffel symbols of embedded manifolds.
//!
//! A [`Manifold`] is either *parameterized* (an atlas of charts
//! `φ_k: U_k ⊂ R^m → R^n`, the metric being the one induced by the
//! embedding, `g = dφᵀ dφ`) or *implicit* (the zero set of
//! `f: R^n → R^k` with `df` of full rank along it).

pub mod catalog;
mod map;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetric_eigen, Mat, SymmetricEigen};

pub use map::{fd_step, second_derivatives, ExprMap, FirstOrderMap, MapJet, SmoothMap};

/// Relative singular-value threshold below which a differential counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;
/// Default `‖f‖/σ_min(df)` bound for "on the manifold" outside of walks.
pub const ON_MANIFOLD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: Vec<f64>) -> Self {
        Self { chart, coords }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientPoint {
    pub coords: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

/// A position on a manifold, in the representation native to its description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManifoldPoint {
    Chart(ChartPoint),
    Ambient(AmbientPoint),
}

impl ManifoldPoint {
    pub fn as_chart(&self) -> Option<&ChartPoint> {
        match self {
            ManifoldPoint::Chart(p) => Some(p),
            ManifoldPoint::Ambient(_) => None,
        }
    }

    pub fn as_ambient(&self) -> Option<&AmbientPoint> {
        match self {
            ManifoldPoint::Ambient(p) => Some(p),
            ManifoldPoint::Chart(_) => None,
        }
    }
}

/// Range of one chart coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoordinateRange {
    /// The whole real line, identified modulo `period`; values are kept in `[0, period)`.
    Periodic { period: f64 },
    /// The open interval `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDomain {
    pub coords: Vec<CoordinateRange>,
}

impl ChartDomain {
    pub fn periodic(periods: &[f64]) -> Self {
        Self {
            coords: periods
                .iter()
                .map(|&period| CoordinateRange::Periodic { period })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().all(|v| v.is_finite())
            && self.coords.iter().zip(x).all(|(r, &v)| match *r {
                CoordinateRange::Periodic { .. } => true,
                CoordinateRange::Interval { lo, hi } => v > lo && v < hi,
            })
    }

    /// Coordinate distance to the domain boundary (infinite for fully periodic charts).
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.coords
            .iter()
            .zip(x)
            .map(|(r, &v)| match *r {
                CoordinateRange::Periodic { .. } => f64::INFINITY,
                CoordinateRange::Interval { lo, hi } => (v - lo).min(hi - v),
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Reduces periodic coordinates into `[0, period)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (r, v) in self.coords.iter().zip(x.iter_mut()) {
            if let CoordinateRange::Periodic { period } = *r {
                let mut w = v.rem_euclid(period);
                if w >= period {
                    w = 0.0;
                }
                *v = w;
            }
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.coords
            .iter()
            .all(|r| matches!(r, CoordinateRange::Periodic { .. }))
    }
}

pub type InverseFn = dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync;

/// One chart `φ: U → R^n` of an atlas.
#[derive(Clone)]
pub struct Chart {
    pub map: Arc<dyn SmoothMap>,
    pub domain: ChartDomain,
    inverse: Option<Arc<InverseFn>>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("map", &self.map)
            .field("domain", &self.domain)
            .field("closed_form_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl Chart {
    pub fn new(map: Arc<dyn SmoothMap>, domain: ChartDomain) -> Self {
        Self {
            map,
            domain,
            inverse: None,
        }
    }

    pub fn with_inverse(
        mut self,
        inverse: impl Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    /// Chart coordinates of an ambient point, `None` if it is not in the chart image.
    pub fn coordinates_of(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut c = match &self.inverse {
            Some(inv) => inv(x)?,
            None => self.invert_numerically(x)?,
        };
        self.domain.wrap(&mut c);
        if !self.domain.contains(&c) {
            return None;
        }
        let back = self.map.value(&c).ok()?;
        let err = linalg::norm(&linalg::sub(&back, x));
        (err <= 1e-8 * (1.0 + linalg::norm(x))).then_some(c)
    }

    /// Gauss–Newton least squares from a small grid of starting points.
    fn invert_numerically(&self, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.domain.dim();
        let starts_per_axis = 5usize;
        let total = starts_per_axis.pow(m as u32).min(625);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in 0..total {
            let mut c: Vec<f64> = Vec::with_capacity(m);
            let mut idx = s;
            for r in &self.domain.coords {
                let t = ((idx % starts_per_axis) as f64 + 0.5) / starts_per_axis as f64;
                idx /= starts_per_axis;
                c.push(match *r {
                    CoordinateRange::Periodic { period } => t * period,
                    CoordinateRange::Interval { lo, hi } => lo + t * (hi - lo),
                });
            }
            for _ in 0..50 {
                let Ok(jet) = self.map.jets(&c) else { break };
                let r = linalg::sub(&jet.value, x);
                let jtj = jet.jacobian.gram();
                let rhs = jet.jacobian.tr_mul_vec(&r);
                let Some(step) = linalg::solve(&jtj, &rhs) else { break };
                for (ci, si) in c.iter_mut().zip(&step) {
                    *ci -= si;
                }
                if linalg::norm(&step) < 1e-14 * (1.0 + linalg::norm(&c)) {
                    break;
                }
            }
            self.domain.wrap(&mut c);
            if !self.domain.contains(&c) {
                continue;
            }
            let Ok(v) = self.map.value(&c) else { continue };
            let err = linalg::norm(&linalg::sub(&v, x));
            if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, c));
            }
        }
        best.map(|(_, c)| c)
    }
}

#[derive(Debug, Clone)]
pub struct Atlas {
    pub charts: Vec<Chart>,
    pub dim: usize,
    pub ambient_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Implicit {
    pub constraint: Arc<dyn SmoothMap>,
}

#[derive(Debug, Clone)]
pub enum ManifoldKind {
    Parameterized(Atlas),
    Implicit(Implicit),
}

/// Closed-form exponential maps known for catalog manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpOracle {
    /// Unit sphere: great circles.
    Sphere,
    /// Flat chart: straight lines modulo the periods.
    Translation,
    /// Only the numerical geodesic ODE is available.
    None,
}

/// An embedded compact manifold without boundary. Immutable once built.
#[derive(Debug, Clone)]
pub struct Manifold {
    pub name: String,
    pub kind: ManifoldKind,
    pub exp_oracle: ExpOracle,
    /// A known point on the manifold, used as the default start of walks.
    pub base_point: ManifoldPoint,
    /// Riemannian volume, when known in closed form.
    pub volume: Option<f64>,
}

impl Manifold {
    pub fn parameterized(name: impl Into<String>, atlas: Atlas, base_point: ChartPoint) -> Self {
        Self {
            name: name.into(),
            kind: ManifoldKind::Parameterized(atlas),
            exp_oracle: ExpOracle::None,
            base_point: ManifoldPoint::Chart(base_point),
            volume: None,
        }
    }

    pub fn implicit(
        name: impl Into<String>,
        constraint: Arc<dyn SmoothMap>,
        base_point: Vec<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ManifoldKind::Implicit(Implicit { constraint }),
            exp_oracle: ExpOracle::None,
            base_point: ManifoldPoint::Ambient(AmbientPoint::new(base_point)),
            volume: None,
        }
    }

    pub fn with_exp_oracle(mut self, oracle: ExpOracle) -> Self {
        self.exp_oracle = oracle;
        self
    }

    pub fn with_volume(mut self, volume: f64) -> Self {
        self.volume = Some(volume);
        self
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Parameterized(a) => a.dim,
            ManifoldKind::Implicit(i) => i
                .constraint
                .in_dim()
                .saturating_sub(i.constraint.out_dim()),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Parameterized(a) => a.ambient_dim,
            ManifoldKind::Implicit(i) => i.constraint.in_dim(),
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self.kind, ManifoldKind::Parameterized(_))
    }

    pub fn atlas(&self) -> Result<&Atlas> {
        match &self.kind {
            ManifoldKind::Parameterized(a) => Ok(a),
            ManifoldKind::Implicit(_) => Err(Error::WrongRepresentation {
                expected: "a parameterized manifold",
            }),
        }
    }

    pub fn constraint(&self) -> Result<&dyn SmoothMap> {
        match &self.kind {
            ManifoldKind::Implicit(i) => Ok(i.constraint.as_ref()),
            ManifoldKind::Parameterized(_) => Err(Error::WrongRepresentation {
                expected: "an implicit manifold",
            }),
        }
    }

    pub fn chart(&self, id: usize) -> Result<&Chart> {
        self.atlas()?
            .charts
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("chart {id} does not exist")))
    }

    /// Ambient coordinates of a point.
    pub fn ambient(&self, p: &ManifoldPoint) -> Result<Vec<f64>> {
        match p {
            ManifoldPoint::Ambient(a) => Ok(a.coords.clone()),
            ManifoldPoint::Chart(c) => {
                let chart = self.chart(c.chart)?;
                if !chart.domain.contains(&c.coords) {
                    return Err(Error::ChartDomainViolation {
                        chart: c.chart,
                        coords: c.coords.clone(),
                    });
                }
                chart.map.value(&c.coords)
            }
        }
    }

    /// Native representation of an ambient point: itself for implicit
    /// manifolds, chart coordinates (lowest chart id) for parameterized ones.
    pub fn point_from_ambient(&self, x: &[f64]) -> Result<ManifoldPoint> {
        match &self.kind {
            ManifoldKind::Implicit(_) => Ok(ManifoldPoint::Ambient(AmbientPoint::new(x.to_vec()))),
            ManifoldKind::Parameterized(_) => {
                let chart = select_chart(self, &AmbientPoint::new(x.to_vec()), 0.0)?;
                let coords = self.chart(chart)?.coordinates_of(x).ok_or(Error::NoChartWithMargin {
                    margin: 0.0,
                })?;
                Ok(ManifoldPoint::Chart(ChartPoint::new(chart, coords)))
            }
        }
    }

    /// `‖f(x)‖₂ / σ_min(df|_x)` for implicit manifolds.
    pub fn constraint_residual(&self, x: &[f64]) -> Result<f64> {
        let f = self.constraint()?;
        let jet = f.jets(x)?;
        let sv = linalg::singular_values(&jet.jacobian);
        Ok(linalg::norm(&jet.value) / sv[0])
    }
}

/// Riemannian metric in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub g: Mat,
}

impl MetricTensor {
    pub fn dim(&self) -> usize {
        self.g.rows()
    }

    pub fn eigen(&self) -> SymmetricEigen {
        symmetric_eigen(&self.g)
    }

    pub fn inverse(&self) -> Result<Mat> {
        linalg::inverse(&self.g).ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })
    }

    pub fn determinant(&self) -> f64 {
        self.eigen().values.iter().product()
    }

    /// `uᵀ g v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.g.bilinear(u, v)
    }
}

/// Christoffel symbols of the second kind, `Γ^k_ij` stored at `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTensor {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    /// `(Γ^k_ij u^i v^j)_k`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.dim;
        (0..m)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += self.get(k, i, j) * u[i] * v[j];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
    }
}

fn chart_point_checked<'a>(manifold: &'a Manifold, p: &ChartPoint) -> Result<&'a Chart> {
    let chart = manifold.chart(p.chart)?;
    if !chart.domain.contains(&p.coords) {
        return Err(Error::ChartDomainViolation {
            chart: p.chart,
            coords: p.coords.clone(),
        });
    }
    Ok(chart)
}

fn metric_from_jacobian(jacobian: &Mat) -> Result<MetricTensor> {
    let g = jacobian.gram();
    let eig = symmetric_eigen(&g);
    let min = eig.values[0];
    let max = *eig.values.last().unwrap_or(&0.0);
    // singular values of dφ are the square roots of the eigenvalues of g
    if !(min > 0.0) || min.sqrt() <= RANK_TOLERANCE * max.sqrt() {
        return Err(Error::DegenerateMetric { min_eigenvalue: min });
    }
    Ok(MetricTensor { g })
}

/// `g = dφᵀ dφ` at a chart point.
pub fn metric_at(manifold: &Manifold, p: &ChartPoint) -> Result<MetricTensor> {
    let chart = chart_point_checked(manifold, p)?;
    let jet = chart.map.jets(&p.coords)?;
    metric_from_jacobian(&jet.jacobian)
}

/// Metric and Christoffel symbols from one evaluation of the chart's derivatives.
pub fn metric_and_christoffel_at(
    manifold: &Manifold,
    p: &ChartPoint,
) -> Result<(MetricTensor, ChristoffelTensor)> {
    let chart = chart_point_checked(manifold, p)?;
    if !chart.map.has_exact_hessians() {
        let g = metric_at(manifold, p)?;
        let gamma = christoffel_fd(manifold, p)?;
        return Ok((g, gamma));
    }
    let (jet, hess) = second_derivatives(chart.map.as_ref(), &p.coords)?;
    let metric = metric_from_jacobian(&jet.jacobian)?;
    let m = metric.dim();
    let j = &jet.jacobian;
    // dg[l][i][j] = ∂_l g_ij = Σ_a (∂_l∂_i φ^a ∂_j φ^a + ∂_i φ^a ∂_l∂_j φ^a)
    let mut dg = vec![0.0; m * m * m];
    for l in 0..m {
        for i in 0..m {
            for jj in i..m {
                let mut s = 0.0;
                for (a, ha) in hess.iter().enumerate() {
                    s += ha[(l, i)] * j[(a, jj)] + j[(a, i)] * ha[(l, jj)];
                }
                dg[(l * m + i) * m + jj] = s;
                dg[(l * m + jj) * m + i] = s;
            }
        }
    }
    let gamma = christoffel_from_metric_derivatives(&metric, &dg)?;
    Ok((metric, gamma))
}

fn christoffel_from_metric_derivatives(
    metric: &MetricTensor,
    dg: &[f64],
) -> Result<ChristoffelTensor> {
    let m = metric.dim();
    let ginv = metric.inverse()?;
    let d = |l: usize, i: usize, j: usize| dg[(l * m + i) * m + j];
    let mut gamma = ChristoffelTensor::zeros(m);
    for k in 0..m {
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += ginv[(k, l)] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                }
                gamma.set(k, i, j, 0.5 * s);
                gamma.set(k, j, i, 0.5 * s);
            }
        }
    }
    Ok(gamma)
}

/// `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)` at a chart point, using
/// exact second derivatives of the chart when available.
pub fn christoffel_at(manifold: &Manifold, p: &ChartPoint) -> Result<ChristoffelTensor> {
    metric_and_christoffel_at(manifold, p).map(|(_, g)| g)
}

/// Christoffel symbols with metric derivatives from central differences of `g`.
pub fn christoffel_fd(manifold: &Manifold, p: &ChartPoint) -> Result<ChristoffelTensor> {
    let chart = chart_point_checked(manifold, p)?;
    let metric = metric_at(manifold, p)?;
    let m = metric.dim();
    let mut dg = vec![0.0; m * m * m];
    let mut x = p.coords.clone();
    for l in 0..m {
        let h = fd_step(p.coords[l]);
        x[l] = p.coords[l] + h;
        let gp = chart.map.jets(&x)?.jacobian.gram();
        x[l] = p.coords[l] - h;
        let gm = chart.map.jets(&x)?.jacobian.gram();
        x[l] = p.coords[l];
        for i in 0..m {
            for j in 0..m {
                dg[(l * m + i) * m + j] = (gp[(i, j)] - gm[(i, j)]) / (2.0 * h);
            }
        }
    }
    christoffel_from_metric_derivatives(&metric, &dg)
}

/// Orthonormal basis of the row space of `df` (the normal space at `x`).
pub fn normal_basis(df: &Mat) -> Result<Vec<Vec<f64>>> {
    let sv = linalg::singular_values(df);
    let smax = *sv.last().unwrap_or(&0.0);
    if !(sv[0] > RANK_TOLERANCE * smax) {
        return Err(Error::RankDeficient { sigma_min: sv[0] });
    }
    let rows: Vec<Vec<f64>> = (0..df.rows()).map(|r| df.row(r).to_vec()).collect();
    let basis = linalg::orthonormalize(&rows, 0.0);
    if basis.len() < df.rows() {
        return Err(Error::RankDeficient { sigma_min: sv[0] });
    }
    Ok(basis)
}

/// Orthonormal basis of `T_xM = ker(df|_x)`.
pub fn tangent_frame_implicit(manifold: &Manifold, x: &AmbientPoint) -> Result<Vec<Vec<f64>>> {
    let f = manifold.constraint()?;
    let n = f.in_dim();
    let k = f.out_dim();
    if k >= n {
        return Err(Error::EmptyTangent);
    }
    let df = f.jets(&x.coords)?.jacobian;
    tangent_frame_from_differential(&df)
}

pub(crate) fn tangent_frame_from_differential(df: &Mat) -> Result<Vec<Vec<f64>>> {
    let n = df.cols();
    let k = df.rows();
    if k >= n {
        return Err(Error::EmptyTangent);
    }
    let normals = normal_basis(df)?;
    // standard basis vectors, most tangential first
    let mut cands: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let resid = 1.0 - normals.iter().map(|q| q[i] * q[i]).sum::<f64>();
            (resid, e)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut all = normals;
    all.extend(cands.into_iter().map(|(_, e)| e));
    let basis = linalg::orthonormalize(&all, 1e-6);
    Ok(basis.into_iter().skip(k).take(n - k).collect())
}

/// Lowest-id chart whose domain contains the preimage of `x` with at least
/// `margin` coordinate distance to the boundary.
pub fn select_chart(manifold: &Manifold, x: &AmbientPoint, margin: f64) -> Result<usize> {
    let atlas = manifold.atlas()?;
    for (id, chart) in atlas.charts.iter().enumerate() {
        if let Some(c) = chart.coordinates_of(&x.coords) {
            if chart.domain.margin(&c) >= margin {
                return Ok(id);
            }
        }
    }
    Err(Error::NoChartWithMargin { margin })
}

#[cfg(test)]
mod tests {
    use super::catalog;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn torus() -> Manifold {
        catalog::lookup("torus:R=1.1,r=1.0").unwrap()
    }

    /// Symbolic surface-of-revolution formulas for φ(s,t) = ((R+r cos s)cos t, (R+r cos s)sin t, r sin s):
    /// g = diag(r², (R + r cos s)²), Γ^s_tt = (R + r cos s) sin s / r, Γ^t_st = −r sin s / (R + r cos s).
    fn torus_oracle(big_r: f64, r: f64, s: f64) -> (f64, f64, f64, f64) {
        let rho = big_r + r * s.cos();
        (r * r, rho * rho, rho * s.sin() / r, -r * s.sin() / rho)
    }

    #[test]
    fn flat_torus_metric_is_identity() {
        let m = catalog::lookup("flat-torus").unwrap();
        let g = metric_at(&m, &ChartPoint::new(0, vec![0.3, 0.7])).unwrap();
        assert_eq!(g.g, Mat::identity(2));
        let gamma = christoffel_at(&m, &ChartPoint::new(0, vec![0.3, 0.7])).unwrap();
        assert_eq!(gamma.max_abs(), 0.0);
    }

    #[test]
    fn embedded_torus_metric_at_origin() {
        let g = metric_at(&torus(), &ChartPoint::new(0, vec![0.0, 0.0])).unwrap();
        assert!((g.g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((g.g[(1, 1)] - 2.1 * 2.1).abs() < 1e-14);
        assert_eq!(g.g[(0, 1)], 0.0);
    }

    #[test]
    fn embedded_torus_christoffel_at_quarter_turn() {
        let gamma = christoffel_at(&torus(), &ChartPoint::new(0, vec![PI / 2.0, 0.0])).unwrap();
        // index 0 = s, 1 = t
        assert!((gamma.get(0, 1, 1) - 1.1).abs() < 1e-14);
        assert!((gamma.get(1, 0, 1) + 1.0 / 1.1).abs() < 1e-14);
        assert!((gamma.get(1, 1, 0) + 1.0 / 1.1).abs() < 1e-14);
    }

    #[test]
    fn torus_matches_closed_form_at_random_points() {
        let m = torus();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = rng.random_range(0.0..2.0 * PI);
            let t = rng.random_range(0.0..2.0 * PI);
            let p = ChartPoint::new(0, vec![s, t]);
            let (g, gamma) = metric_and_christoffel_at(&m, &p).unwrap();
            let (gss, gtt, gs_tt, gt_st) = torus_oracle(1.1, 1.0, s);
            assert!((g.g[(0, 0)] - gss).abs() < 1e-10);
            assert!((g.g[(1, 1)] - gtt).abs() < 1e-10);
            assert!(g.g[(0, 1)].abs() < 1e-10);
            assert!((gamma.get(0, 1, 1) - gs_tt).abs() < 1e-10);
            assert!((gamma.get(1, 0, 1) - gt_st).abs() < 1e-10);
        }
    }

    #[test]
    fn metric_and_christoffel_properties_across_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for name in ["flat-torus", "torus:R=1.1,r=1.0", "torus:R=2.5,r=0.7", "sphere-param"] {
            let m = catalog::lookup(name).unwrap();
            let atlas = m.atlas().unwrap();
            for _ in 0..1000 {
                let chart = rng.random_range(0..atlas.charts.len());
                let coords: Vec<f64> = atlas.charts[chart]
                    .domain
                    .coords
                    .iter()
                    .map(|r| match *r {
                        CoordinateRange::Periodic { period } => rng.random_range(0.0..period),
                        CoordinateRange::Interval { lo, hi } => {
                            let w = hi - lo;
                            rng.random_range(lo + 0.05 * w..hi - 0.05 * w)
                        }
                    })
                    .collect();
                let p = ChartPoint::new(chart, coords);
                let (g, gamma) = metric_and_christoffel_at(&m, &p).unwrap();
                let dim = g.dim();
                for i in 0..dim {
                    for j in 0..dim {
                        assert!((g.g[(i, j)] - g.g[(j, i)]).abs() <= 1e-12 * g.g.max_abs());
                    }
                }
                assert!(g.eigen().values[0] > 0.0);
                let fd = christoffel_fd(&m, &p).unwrap();
                for k in 0..dim {
                    for i in 0..dim {
                        for j in 0..dim {
                            assert!((gamma.get(k, i, j) - gamma.get(k, j, i)).abs() < 1e-12);
                            assert!(
                                (gamma.get(k, i, j) - fd.get(k, i, j)).abs() < 1e-6,
                                "{name} Γ^{k}_{i}{j}: {} vs fd {}",
                                gamma.get(k, i, j),
                                fd.get(k, i, j)
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn first_order_chart_falls_back_to_finite_differences() {
        let (big_r, r) = (1.1, 1.0);
        let map = FirstOrderMap::new(
            2,
            3,
            move |x| {
                let rho = big_r + r * x[0].cos();
                vec![rho * x[1].cos(), rho * x[1].sin(), r * x[0].sin()]
            },
            move |x| {
                let (s, t) = (x[0], x[1]);
                let rho = big_r + r * s.cos();
                Mat::from_rows(
                    3,
                    2,
                    vec![
                        -r * s.sin() * t.cos(),
                        -rho * t.sin(),
                        -r * s.sin() * t.sin(),
                        rho * t.cos(),
                        r * s.cos(),
                        0.0,
                    ],
                )
            },
        );
        let atlas = Atlas {
            charts: vec![Chart::new(Arc::new(map), ChartDomain::periodic(&[2.0 * PI, 2.0 * PI]))],
            dim: 2,
            ambient_dim: 3,
        };
        let m = Manifold::parameterized("fd-torus", atlas, ChartPoint::new(0, vec![0.0, 0.0]));
        let gamma = christoffel_at(&m, &ChartPoint::new(0, vec![PI / 2.0, 0.0])).unwrap();
        assert!((gamma.get(0, 1, 1) - 1.1).abs() < 1e-6);
        assert!((gamma.get(1, 0, 1) + 1.0 / 1.1).abs() < 1e-6);
    }

    #[test]
    fn chart_domain_violation_is_reported() {
        let m = catalog::lookup("sphere-param").unwrap();
        let err = metric_at(&m, &ChartPoint::new(0, vec![-0.1, 0.0])).unwrap_err();
        assert!(matches!(err, Error::ChartDomainViolation { chart: 0, .. }));
    }

    #[test]
    fn sphere_tangent_frame_at_north_pole() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let frame = tangent_frame_implicit(&m, &AmbientPoint::new(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(frame.len(), 2);
        for v in &frame {
            assert!(v[2].abs() < 1e-15);
            assert!((linalg::norm(v) - 1.0).abs() < 1e-15);
        }
        assert!(linalg::dot(&frame[0], &frame[1]).abs() < 1e-15);
    }

    #[test]
    fn genus_two_tangent_frames_are_orthonormal_and_tangent() {
        let m = catalog::lookup("genus2").unwrap();
        let f = m.constraint().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tested = 0;
        while tested < 200 {
            // points on the surface from the two-sheet parameterization z = ±sqrt(0.01 − h²)
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-0.6..0.6);
            let h = x * x * (1.0 - x * x) - y * y;
            if h * h >= 0.0099 {
                continue;
            }
            let z = (0.01 - h * h).sqrt() * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let p = AmbientPoint::new(vec![x, y, z]);
            let frame = tangent_frame_implicit(&m, &p).unwrap();
            let df = f.jets(&p.coords).unwrap().jacobian;
            let dfn = df.frobenius_norm();
            for (i, v) in frame.iter().enumerate() {
                assert!(linalg::norm(&df.mul_vec(v)) <= 1e-10 * dfn);
                for (j, w) in frame.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((linalg::dot(v, w) - target).abs() < 1e-10);
                }
            }
            tested += 1;
        }
    }

    #[test]
    fn zero_dimensional_kernel_is_empty_tangent() {
        let f = ExprMap::parse(&["x - 1", "y"], 2).unwrap();
        let m = Manifold::implicit("point", Arc::new(f), vec![1.0, 0.0]);
        assert_eq!(
            tangent_frame_implicit(&m, &AmbientPoint::new(vec![1.0, 0.0])).unwrap_err(),
            Error::EmptyTangent
        );
    }

    #[test]
    fn rank_deficient_differential() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let err = tangent_frame_implicit(&m, &AmbientPoint::new(vec![0.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn single_periodic_chart_is_always_selected() {
        let m = torus();
        let x = m.ambient(&ManifoldPoint::Chart(ChartPoint::new(0, vec![1.0, 2.0]))).unwrap();
        assert_eq!(select_chart(&m, &AmbientPoint::new(x), 10.0).unwrap(), 0);
    }

    fn circle_two_charts() -> Manifold {
        // angle charts (−0.2, π+0.2) and (π−0.2, 2π+0.2) on the unit circle
        let chart = |lo: f64, hi: f64| {
            let map = ExprMap::parse(&["cos(x)", "sin(x)"], 1).unwrap();
            Chart::new(Arc::new(map), ChartDomain {
                coords: vec![CoordinateRange::Interval { lo, hi }],
            })
        };
        let atlas = Atlas {
            charts: vec![chart(-0.2, PI + 0.2), chart(PI - 0.2, 2.0 * PI + 0.2)],
            dim: 1,
            ambient_dim: 2,
        };
        Manifold::parameterized("circle", atlas, ChartPoint::new(0, vec![1.0]))
    }

    #[test]
    fn overlapping_charts_tie_break_to_lowest_id() {
        let m = circle_two_charts();
        // angle π lies in both charts with margin 0.2
        let x = AmbientPoint::new(vec![-1.0, 0.0]);
        assert_eq!(select_chart(&m, &x, 0.1).unwrap(), 0);
        // angle 3π/2 only in chart 1
        let y = AmbientPoint::new(vec![0.0, -1.0]);
        assert_eq!(select_chart(&m, &y, 0.1).unwrap(), 1);
    }

    #[test]
    fn margin_beyond_inradius_fails() {
        let m = circle_two_charts();
        let x = AmbientPoint::new(vec![0.0, 1.0]);
        assert!(matches!(
            select_chart(&m, &x, 5.0),
            Err(Error::NoChartWithMargin { .. })
        ));
    }
}
