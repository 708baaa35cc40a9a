//! Brownian motion on compact Riemannian manifolds by retraction-based
//! geodesic random walks.
//!
//! ```
//! use manifold_walk::geometry::catalog;
//! use manifold_walk::retraction::RetractionKind;
//! use manifold_walk::walk::{run_walk, WalkConfig};
//!
//! let torus = catalog::lookup("torus:R=1.1,r=1.0").unwrap();
//! let cfg = WalkConfig::new(0.5, 100, RetractionKind::ParamChristoffel, 42);
//! let trajectory = run_walk(&torus, &cfg).unwrap();
//! assert_eq!(trajectory.points.len(), 101);
//! ```

#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod retraction;
pub mod sampling;
pub mod validate;
pub mod walk;

pub use error::{Error, Result};
