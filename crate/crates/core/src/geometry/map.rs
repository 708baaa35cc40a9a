use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{self, Ast};
use crate::linalg::Mat;

/// Value and derivatives of a map `R^d → R^p` at one point.
#[derive(Debug, Clone)]
pub struct MapJet {
    pub value: Vec<f64>,
    /// `p×d`
    pub jacobian: Mat,
    /// One symmetric `d×d` matrix per output component, when exact second
    /// derivatives are available.
    pub hessians: Option<Vec<Mat>>,
}

/// A smooth map between coordinate spaces: a chart parameterization
/// `φ: R^m → R^n` or a constraint `f: R^n → R^k`.
pub trait SmoothMap: Send + Sync + fmt::Debug {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Value and Jacobian; second derivatives are filled in when exact.
    fn jets(&self, x: &[f64]) -> Result<MapJet>;

    fn has_exact_hessians(&self) -> bool {
        true
    }
}

/// Vector-valued map given as one expression per output component.
#[derive(Debug, Clone)]
pub struct ExprMap {
    components: Vec<Ast>,
    arity: usize,
}

impl ExprMap {
    pub fn new(components: Vec<Ast>) -> Result<Self> {
        let arity = components
            .first()
            .map(Ast::arity)
            .ok_or_else(|| Error::InvalidArgument("map needs at least one component".into()))?;
        if components.iter().any(|c| c.arity() != arity) {
            return Err(Error::InvalidArgument(
                "map components must share one arity".into(),
            ));
        }
        if arity > expr::MAX_JET_VARS {
            return Err(Error::DimensionError(format!(
                "expression maps support at most {} variables",
                expr::MAX_JET_VARS
            )));
        }
        Ok(Self { components, arity })
    }

    pub fn parse<S: AsRef<str>>(texts: &[S], arity: usize) -> Result<Self> {
        let asts = texts
            .iter()
            .map(|t| expr::parse(t.as_ref(), arity))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(asts)
    }

    pub fn components(&self) -> &[Ast] {
        &self.components
    }
}

impl SmoothMap for ExprMap {
    fn in_dim(&self) -> usize {
        self.arity
    }

    fn out_dim(&self) -> usize {
        self.components.len()
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| c.eval(x).map_err(Error::from))
            .collect()
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        let d = self.arity;
        let p = self.components.len();
        let mut value = Vec::with_capacity(p);
        let mut jacobian = Mat::zeros(p, d);
        let mut hessians = Vec::with_capacity(p);
        for (r, c) in self.components.iter().enumerate() {
            let j = c.eval_jet(x)?;
            value.push(j.value());
            for (k, g) in j.grad().iter().enumerate() {
                jacobian[(r, k)] = *g;
            }
            hessians.push(Mat::from_rows(d, d, j.hessian_matrix()));
        }
        Ok(MapJet {
            value,
            jacobian,
            hessians: Some(hessians),
        })
    }
}

type ValueFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> Mat + Send + Sync;

/// Map known only through its value and Jacobian; second derivatives are
/// taken by finite differences where needed.
pub struct FirstOrderMap {
    in_dim: usize,
    out_dim: usize,
    value: Box<ValueFn>,
    jacobian: Box<JacobianFn>,
}

impl FirstOrderMap {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> Mat + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            value: Box::new(value),
            jacobian: Box::new(jacobian),
        }
    }
}

impl fmt::Debug for FirstOrderMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FirstOrderMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .finish_non_exhaustive()
    }
}

impl SmoothMap for FirstOrderMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.value)(x))
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        Ok(MapJet {
            value: (self.value)(x),
            jacobian: (self.jacobian)(x),
            hessians: None,
        })
    }

    fn has_exact_hessians(&self) -> bool {
        false
    }
}

/// Finite-difference step for second derivatives: `cbrt(ε_mach)·(1+|x|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// Hessians of every component: exact when the map provides them, otherwise
/// central differences of the Jacobian.
pub fn second_derivatives(map: &dyn SmoothMap, x: &[f64]) -> Result<(MapJet, Vec<Mat>)> {
    let jet = map.jets(x)?;
    if let Some(h) = jet.hessians.clone() {
        return Ok((jet, h));
    }
    let d = map.in_dim();
    let p = map.out_dim();
    let mut hs = vec![Mat::zeros(d, d); p];
    let mut xp = x.to_vec();
    for i in 0..d {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let jp = map.jets(&xp)?.jacobian;
        xp[i] = x[i] - h;
        let jm = map.jets(&xp)?.jacobian;
        xp[i] = x[i];
        for (a, ha) in hs.iter_mut().enumerate() {
            for j in 0..d {
                ha[(i, j)] = (jp[(a, j)] - jm[(a, j)]) / (2.0 * h);
            }
        }
    }
    for ha in &mut hs {
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (ha[(i, j)] + ha[(j, i)]);
                ha[(i, j)] = s;
                ha[(j, i)] = s;
            }
        }
    }
    Ok((jet, hs))
}
