#![allow(dead_code)]

use manifold_walk::geometry::{AmbientPoint, Manifold, ManifoldPoint};
use manifold_walk::linalg;
use manifold_walk::retraction::Retraction;
use manifold_walk::Result;

/// Deliberately first-order retraction on the unit sphere: `x + v` pushed
/// along `e₁` by `0.1|v|²` before normalizing. Its covariant acceleration
/// is the tangential part of `0.2 e₁`.
pub struct Skewed;

impl Retraction for Skewed {
    fn retract(&self, manifold: &Manifold, x: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
        let x = manifold.ambient(x)?;
        let mut y = linalg::add(&x, v);
        y[0] += 0.1 * linalg::dot(v, v);
        let r = linalg::norm(&y);
        Ok(ManifoldPoint::Ambient(AmbientPoint::new(linalg::scale(&y, 1.0 / r))))
    }

    fn name(&self) -> String {
        "skewed".into()
    }
}
