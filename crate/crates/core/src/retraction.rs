//! Second-order retractions and reference exponential maps.
//!
//! * p-Ret: `x̃ + ṽ − ½ Γ(x̃)(ṽ, ṽ)` in a chart.
//! * π-Ret: closest-point projection of `x + v` onto an implicit manifold,
//!   by Newton's method on the Lagrangian `½‖z − y‖² − λᵀf(z)`.
//! * Exponential maps, in closed form for catalog manifolds or by RK4 on
//!   the geodesic equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, christoffel_at, second_derivatives, AmbientPoint, ChartPoint, ExpOracle, Manifold,
    ManifoldPoint,
};
use crate::linalg::{self, Mat};

/// Number of RK4 substeps for numerical geodesics.
pub const GEODESIC_SUBSTEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetractionKind {
    /// p-Ret, parameterized manifolds only.
    #[serde(rename = "pret")]
    ParamChristoffel,
    /// π-Ret, implicit manifolds only.
    #[serde(rename = "piret")]
    ProjectNewton,
    /// Closed-form exponential map of a catalog manifold.
    #[serde(rename = "exact")]
    ExactExp,
    /// RK4 integration of the geodesic equation.
    #[serde(rename = "ode")]
    GeodesicOde,
}

impl RetractionKind {
    /// Short name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            RetractionKind::ParamChristoffel => "pret",
            RetractionKind::ProjectNewton => "piret",
            RetractionKind::ExactExp => "exact",
            RetractionKind::GeodesicOde => "ode",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "pret" => RetractionKind::ParamChristoffel,
            "piret" => RetractionKind::ProjectNewton,
            "exact" => RetractionKind::ExactExp,
            "ode" => RetractionKind::GeodesicOde,
            _ => return None,
        })
    }

    /// The second-order retraction native to the manifold's representation.
    pub fn default_for(manifold: &Manifold) -> Self {
        if manifold.is_parameterized() {
            RetractionKind::ParamChristoffel
        } else {
            RetractionKind::ProjectNewton
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NewtonVariant {
    FullNewton,
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSettings {
    pub max_iters: usize,
    /// Newton stops once `‖f(z)‖₂/σ_min(df|_z) < threshold_scale³`.
    pub threshold_scale: f64,
    pub variant: NewtonVariant,
}

impl ProjectionSettings {
    pub fn new(threshold_scale: f64) -> Self {
        Self {
            max_iters: 50,
            threshold_scale,
            variant: NewtonVariant::FullNewton,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_scale.powi(3)
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.threshold_scale > 0.0) {
            return Err(Error::InvalidArgument("threshold_scale must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self::new(1e-5)
    }
}

/// p-Ret: `x̃ + ṽ − ½(Γ^k_ij ṽ^i ṽ^j)_k` with `Γ` at `x̃`.
pub fn p_ret(manifold: &Manifold, x: &ChartPoint, v: &[f64]) -> Result<ChartPoint> {
    let chart = manifold.chart(x.chart)?;
    if v.len() != chart.domain.dim() {
        return Err(Error::DimensionError(format!(
            "chart tangent vector has {} entries, chart dimension is {}",
            v.len(),
            chart.domain.dim()
        )));
    }
    if v.iter().all(|c| *c == 0.0) {
        if !chart.domain.contains(&x.coords) {
            return Err(Error::ChartDomainViolation {
                chart: x.chart,
                coords: x.coords.clone(),
            });
        }
        return Ok(x.clone());
    }
    let gamma = christoffel_at(manifold, x)?;
    let acc = gamma.contract(v, v);
    let mut coords: Vec<f64> = x
        .coords
        .iter()
        .zip(v)
        .zip(&acc)
        .map(|((c, vi), a)| c + vi - 0.5 * a)
        .collect();
    chart.domain.wrap(&mut coords);
    if !chart.domain.contains(&coords) {
        return Err(Error::ChartDomainViolation {
            chart: x.chart,
            coords,
        });
    }
    Ok(ChartPoint::new(x.chart, coords))
}

/// Result of a traced projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: AmbientPoint,
    pub iterations: usize,
    /// `‖f‖₂/σ_min(df)` at the start and after every Newton step.
    pub residuals: Vec<f64>,
}

/// Closest point on `M` to `y`.
pub fn project_to_manifold(
    manifold: &Manifold,
    y: &AmbientPoint,
    settings: &ProjectionSettings,
) -> Result<AmbientPoint> {
    project_traced(manifold, y, settings).map(|p| p.point)
}

/// Newton iteration on `(z, λ)` for `z − y − dfᵀλ = 0`, `f(z) = 0`, from `z₀ = y`, `λ₀ = 0`.
pub fn project_traced(
    manifold: &Manifold,
    y: &AmbientPoint,
    settings: &ProjectionSettings,
) -> Result<Projection> {
    settings.validate()?;
    let f = manifold.constraint()?;
    let n = f.in_dim();
    let k = f.out_dim();
    if y.coords.len() != n {
        return Err(Error::DimensionError(format!(
            "ambient point has {} entries, expected {n}",
            y.coords.len()
        )));
    }
    let threshold = settings.threshold();
    let full = settings.variant == NewtonVariant::FullNewton;
    let mut z = y.coords.clone();
    let mut lambda = vec![0.0; k];
    let mut residuals = Vec::new();
    let size = n + k;
    let mut jac = vec![0.0; size * size];
    let mut rhs = vec![0.0; size];
    for iter in 0..=settings.max_iters {
        let (jet, hess) = if full {
            second_derivatives(f, &z)?
        } else {
            let jet = f.jets(&z)?;
            (jet, Vec::new())
        };
        let df = &jet.jacobian;
        let sv = linalg::singular_values(df);
        let smax = *sv.last().unwrap_or(&0.0);
        if !(sv[0] > geometry::RANK_TOLERANCE * smax) {
            return Err(Error::RankDeficient { sigma_min: sv[0] });
        }
        let residual = linalg::norm(&jet.value) / sv[0];
        residuals.push(residual);
        if residual < threshold {
            return Ok(Projection {
                point: AmbientPoint::new(z),
                iterations: iter,
                residuals,
            });
        }
        if iter == settings.max_iters {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual,
            });
        }
        // [[I − Σλ_c H_c, −dfᵀ], [df, 0]] (δz, δλ) = −F
        jac.iter_mut().for_each(|e| *e = 0.0);
        for i in 0..n {
            for j in 0..n {
                let mut e = if i == j { 1.0 } else { 0.0 };
                if full {
                    for (c, h) in hess.iter().enumerate() {
                        e -= lambda[c] * h[(i, j)];
                    }
                }
                jac[i * size + j] = e;
            }
            for c in 0..k {
                jac[i * size + n + c] = -df[(c, i)];
                jac[(n + c) * size + i] = df[(c, i)];
            }
        }
        let dft_lambda = df.tr_mul_vec(&lambda);
        for i in 0..n {
            rhs[i] = -(z[i] - y.coords[i] - dft_lambda[i]);
        }
        for c in 0..k {
            rhs[n + c] = -jet.value[c];
        }
        if !linalg::solve_in_place(&mut jac, &mut rhs, size) {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual,
            });
        }
        for i in 0..n {
            z[i] += rhs[i];
        }
        for c in 0..k {
            lambda[c] += rhs[n + c];
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                residual: f64::INFINITY,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// π-Ret: `π_M(x + v)`.
pub fn pi_ret(
    manifold: &Manifold,
    x: &AmbientPoint,
    v: &[f64],
    settings: &ProjectionSettings,
) -> Result<AmbientPoint> {
    if v.len() != x.coords.len() {
        return Err(Error::DimensionError(format!(
            "tangent vector has {} entries, point has {}",
            v.len(),
            x.coords.len()
        )));
    }
    let y = AmbientPoint::new(linalg::add(&x.coords, v));
    project_to_manifold(manifold, &y, settings)
}

/// Pushes a tangent vector forward to ambient space: `dφ ṽ` for chart points,
/// the vector itself for ambient points.
pub fn tangent_to_ambient(manifold: &Manifold, x: &ManifoldPoint, v: &[f64]) -> Result<Vec<f64>> {
    match x {
        ManifoldPoint::Ambient(_) => Ok(v.to_vec()),
        ManifoldPoint::Chart(p) => {
            let chart = manifold.chart(p.chart)?;
            Ok(chart.map.jets(&p.coords)?.jacobian.mul_vec(v))
        }
    }
}

/// `Exp_x(τv)`: closed form when the manifold has one, RK4 otherwise.
pub fn exp_reference(
    manifold: &Manifold,
    x: &ManifoldPoint,
    v: &[f64],
    tau: f64,
) -> Result<ManifoldPoint> {
    match manifold.exp_oracle {
        ExpOracle::Sphere => sphere_exp(manifold, x, v, tau),
        ExpOracle::Translation => {
            let p = x.as_chart().ok_or(Error::WrongRepresentation {
                expected: "a chart point",
            })?;
            let chart = manifold.chart(p.chart)?;
            let mut coords = linalg::axpy(&p.coords, tau, v);
            chart.domain.wrap(&mut coords);
            Ok(ManifoldPoint::Chart(ChartPoint::new(p.chart, coords)))
        }
        ExpOracle::None => geodesic_ode(manifold, x, v, tau),
    }
}

fn sphere_exp(manifold: &Manifold, x: &ManifoldPoint, v: &[f64], tau: f64) -> Result<ManifoldPoint> {
    let xa = manifold.ambient(x)?;
    let va = tangent_to_ambient(manifold, x, v)?;
    let speed = linalg::norm(&va);
    if speed == 0.0 || tau == 0.0 {
        return Ok(x.clone());
    }
    let angle = tau * speed;
    let (s, c) = angle.sin_cos();
    let y: Vec<f64> = xa.iter().zip(&va).map(|(xi, vi)| c * xi + s * vi / speed).collect();
    back_to_representation(manifold, x, &y)
}

/// Expresses an ambient point like `like`: in the same chart when possible.
fn back_to_representation(manifold: &Manifold, like: &ManifoldPoint, y: &[f64]) -> Result<ManifoldPoint> {
    match like {
        ManifoldPoint::Ambient(_) => Ok(ManifoldPoint::Ambient(AmbientPoint::new(y.to_vec()))),
        ManifoldPoint::Chart(p) => {
            let chart = manifold.chart(p.chart)?;
            match chart.coordinates_of(y) {
                Some(c) => Ok(ManifoldPoint::Chart(ChartPoint::new(p.chart, c))),
                None => manifold.point_from_ambient(y),
            }
        }
    }
}

/// `Exp_x(τv)` by RK4 with [`GEODESIC_SUBSTEPS`] steps, regardless of closed forms.
pub fn geodesic_ode(manifold: &Manifold, x: &ManifoldPoint, v: &[f64], tau: f64) -> Result<ManifoldPoint> {
    match x {
        ManifoldPoint::Chart(p) => geodesic_chart(manifold, p, v, tau).map(ManifoldPoint::Chart),
        ManifoldPoint::Ambient(p) => {
            geodesic_implicit(manifold, p, v, tau).map(ManifoldPoint::Ambient)
        }
    }
}

fn rk4<F>(state: &mut Vec<f64>, h: f64, steps: usize, mut deriv: F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = state.len();
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        let k1 = deriv(state)?;
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        let k2 = deriv(&tmp)?;
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        let k3 = deriv(&tmp)?;
        for i in 0..n {
            tmp[i] = state[i] + h * k3[i];
        }
        let k4 = deriv(&tmp)?;
        for i in 0..n {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(())
}

/// `γ̈^k = −Γ^k_ij γ̇^i γ̇^j` in one chart.
fn geodesic_chart(manifold: &Manifold, p: &ChartPoint, v: &[f64], tau: f64) -> Result<ChartPoint> {
    let chart = manifold.chart(p.chart)?;
    let m = chart.domain.dim();
    let mut state: Vec<f64> = p.coords.iter().copied().chain(v.iter().copied()).collect();
    let h = tau / GEODESIC_SUBSTEPS as f64;
    rk4(&mut state, h, GEODESIC_SUBSTEPS, |s| {
        let q = ChartPoint::new(p.chart, s[..m].to_vec());
        let gamma = christoffel_at(manifold, &q)?;
        let acc = gamma.contract(&s[m..], &s[m..]);
        Ok(s[m..].iter().copied().chain(acc.into_iter().map(|a| -a)).collect())
    })?;
    let mut coords = state[..m].to_vec();
    chart.domain.wrap(&mut coords);
    if !chart.domain.contains(&coords) {
        return Err(Error::ChartDomainViolation {
            chart: p.chart,
            coords,
        });
    }
    Ok(ChartPoint::new(p.chart, coords))
}

/// `ü = −dfᵀ(df dfᵀ)⁻¹ (u̇ᵀ H_c u̇)_c`, the acceleration keeping `f(u(t)) = 0`
/// with no tangential part.
fn geodesic_implicit(manifold: &Manifold, p: &AmbientPoint, v: &[f64], tau: f64) -> Result<AmbientPoint> {
    let f = manifold.constraint()?;
    let n = f.in_dim();
    let mut state: Vec<f64> = p.coords.iter().copied().chain(v.iter().copied()).collect();
    let h = tau / GEODESIC_SUBSTEPS as f64;
    rk4(&mut state, h, GEODESIC_SUBSTEPS, |s| {
        let (jet, hess) = second_derivatives(f, &s[..n])?;
        let u = &s[n..];
        let q: Vec<f64> = hess.iter().map(|hc| hc.bilinear(u, u)).collect();
        let normal_acc = normal_combination(&jet.jacobian, &q)?;
        Ok(u.iter().copied().chain(normal_acc.into_iter().map(|a| -a)).collect())
    })?;
    Ok(AmbientPoint::new(state[..n].to_vec()))
}

/// `dfᵀ (df dfᵀ)⁻¹ q`.
pub(crate) fn normal_combination(df: &Mat, q: &[f64]) -> Result<Vec<f64>> {
    let gram = df.outer_gram();
    let coef = linalg::solve(&gram, q).ok_or(Error::RankDeficient { sigma_min: 0.0 })?;
    Ok(df.tr_mul_vec(&coef))
}

/// A map `(x, v) ↦ Ret_x(v)` usable by the walk driver and the validators.
pub trait Retraction: Send + Sync {
    fn retract(&self, manifold: &Manifold, x: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint>;

    fn name(&self) -> String;
}

/// One of the built-in retractions with its projection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardRetraction {
    pub kind: RetractionKind,
    pub projection: ProjectionSettings,
}

impl StandardRetraction {
    pub fn new(kind: RetractionKind, projection: ProjectionSettings) -> Self {
        Self { kind, projection }
    }
}

impl Retraction for StandardRetraction {
    fn retract(&self, manifold: &Manifold, x: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
        retract(manifold, self.kind, x, v, &self.projection)
    }

    fn name(&self) -> String {
        self.kind.name().to_string()
    }
}

/// Applies the retraction of the given kind to `(x, v)`.
pub fn retract(
    manifold: &Manifold,
    kind: RetractionKind,
    x: &ManifoldPoint,
    v: &[f64],
    settings: &ProjectionSettings,
) -> Result<ManifoldPoint> {
    match kind {
        RetractionKind::ParamChristoffel => {
            let p = x.as_chart().ok_or(Error::WrongRepresentation {
                expected: "a chart point (p-Ret needs a parameterized manifold)",
            })?;
            p_ret(manifold, p, v).map(ManifoldPoint::Chart)
        }
        RetractionKind::ProjectNewton => {
            let p = x.as_ambient().ok_or(Error::WrongRepresentation {
                expected: "an ambient point (π-Ret needs an implicit manifold)",
            })?;
            pi_ret(manifold, p, v, settings).map(ManifoldPoint::Ambient)
        }
        RetractionKind::ExactExp => {
            if manifold.exp_oracle == ExpOracle::None {
                return Err(Error::OracleUnavailable(format!(
                    "{} has no closed-form exponential map",
                    manifold.name
                )));
            }
            exp_reference(manifold, x, v, 1.0)
        }
        RetractionKind::GeodesicOde => geodesic_ode(manifold, x, v, 1.0),
    }
}
