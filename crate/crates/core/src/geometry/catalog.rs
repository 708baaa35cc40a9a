//! Built-in manifolds, addressed as `name[:key=value,...]`.
//!
//! | name           | kind          | parameters (defaults)        |
//! |----------------|---------------|------------------------------|
//! | `sphere`       | implicit      | `dim=2` (intrinsic)          |
//! | `sphere-param` | 2 charts      |                              |
//! | `flat-torus`   | 1 periodic    | `L=1`                        |
//! | `torus`        | 1 periodic    | `R=1.1`, `r=1.0`             |
//! | `genus2`       | implicit      |                              |
//! | `ellipsoid`    | implicit      | `a=1.0`, `b=0.8`, `c=0.6`    |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{
    Atlas, Chart, ChartDomain, ChartPoint, CoordinateRange, ExpOracle, Manifold, MapJet,
    SmoothMap,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Volume of the unit `(m−1)`-sphere in `R^m`, `ω_m = 2π^{m/2}/Γ(m/2)`.
pub fn unit_sphere_measure(m: usize) -> f64 {
    // ω_1 = 2, ω_2 = 2π, ω_{m+2} = 2π ω_m / m
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * unit_sphere_measure(m - 2) / (m - 2) as f64,
    }
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub parameters: &'static str,
    pub description: &'static str,
}

pub const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "sphere",
        parameters: "dim=2",
        description: "unit sphere S^dim in R^(dim+1), zero set of |x|^2 - 1",
    },
    CatalogEntry {
        name: "sphere-param",
        parameters: "",
        description: "unit sphere S^2 covered by two spherical-coordinate charts (poles on z and x)",
    },
    CatalogEntry {
        name: "flat-torus",
        parameters: "L=1",
        description: "flat square torus, identity chart on [0,L)^2 with periodic boundary",
    },
    CatalogEntry {
        name: "torus",
        parameters: "R=1.1,r=1.0",
        description: "torus of revolution ((R+r cos s)cos t, (R+r cos s)sin t, r sin s), periodic chart",
    },
    CatalogEntry {
        name: "genus2",
        parameters: "",
        description: "genus-two surface (x^2(1-x^2) - y^2)^2 + z^2 - 0.01 = 0",
    },
    CatalogEntry {
        name: "ellipsoid",
        parameters: "a=1.0,b=0.8,c=0.6",
        description: "triaxial ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1",
    },
];

fn parse_spec(spec: &str) -> Result<(String, BTreeMap<String, f64>)> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim(), r),
        None => (spec.trim(), ""),
    };
    let mut params = BTreeMap::new();
    for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            Error::UnknownManifold(format!("{spec} (parameter `{kv}` is not key=value)"))
        })?;
        let value = crate::expr::parse(v.trim(), 0)
            .and_then(|a| a.eval(&[]))
            .map_err(|_| Error::UnknownManifold(format!("{spec} (bad value `{v}`)")))?;
        params.insert(k.trim().to_string(), value);
    }
    Ok((name.to_string(), params))
}

struct Params {
    spec: String,
    map: BTreeMap<String, f64>,
}

impl Params {
    fn take(&mut self, key: &str, default: f64) -> f64 {
        self.map.remove(key).unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::UnknownManifold(format!(
                "{} (unknown parameter `{k}`)",
                self.spec
            ))),
            None => Ok(()),
        }
    }
}

fn positive(spec: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::UnknownManifold(format!("{spec} (`{key}` must be positive)")))
    }
}

/// Builds a catalog manifold from its spec string.
pub fn lookup(spec: &str) -> Result<Manifold> {
    let (name, map) = parse_spec(spec)?;
    let mut p = Params {
        spec: spec.to_string(),
        map,
    };
    let manifold = match name.as_str() {
        "sphere" => {
            let dim = p.take("dim", 2.0);
            if dim < 1.0 || dim.fract() != 0.0 || dim > 16.0 {
                return Err(Error::UnknownManifold(format!("{spec} (`dim` must be an integer in 1..=16)")));
            }
            sphere(dim as usize)
        }
        "sphere-param" => sphere_param(),
        "flat-torus" => {
            let l = positive(spec, "L", p.take("L", 1.0))?;
            flat_torus(l)
        }
        "torus" => {
            let big_r = positive(spec, "R", p.take("R", 1.1))?;
            let r = positive(spec, "r", p.take("r", 1.0))?;
            if r >= big_r {
                return Err(Error::UnknownManifold(format!("{spec} (need r < R for an embedded torus)")));
            }
            torus(big_r, r)
        }
        "genus2" => genus2(),
        "ellipsoid" => {
            let a = positive(spec, "a", p.take("a", 1.0))?;
            let b = positive(spec, "b", p.take("b", 0.8))?;
            let c = positive(spec, "c", p.take("c", 0.6))?;
            ellipsoid([a, b, c])
        }
        _ => return Err(Error::UnknownManifold(spec.to_string())),
    };
    p.finish()?;
    Ok(manifold)
}

/// Unit sphere `S^dim ⊂ R^{dim+1}` as an implicit manifold.
pub fn sphere(dim: usize) -> Manifold {
    let n = dim + 1;
    let mut north = vec![0.0; n];
    north[n - 1] = 1.0;
    Manifold::implicit(format!("sphere:dim={dim}"), Arc::new(Quadric::sphere(n)), north)
        .with_exp_oracle(ExpOracle::Sphere)
        .with_volume(unit_sphere_measure(n))
}

pub fn ellipsoid(axes: [f64; 3]) -> Manifold {
    Manifold::implicit(
        format!("ellipsoid:a={},b={},c={}", axes[0], axes[1], axes[2]),
        Arc::new(Quadric {
            inv_sq: axes.iter().map(|a| 1.0 / (a * a)).collect(),
        }),
        vec![0.0, 0.0, axes[2]],
    )
}

pub fn genus2() -> Manifold {
    Manifold::implicit("genus2", Arc::new(Genus2), vec![1.0, 0.0, 0.1])
}

pub fn flat_torus(l: f64) -> Manifold {
    let chart = Chart::new(Arc::new(Identity { dim: 2 }), ChartDomain::periodic(&[l, l]))
        .with_inverse(|x| Some(x.to_vec()));
    let atlas = Atlas {
        charts: vec![chart],
        dim: 2,
        ambient_dim: 2,
    };
    Manifold::parameterized(format!("flat-torus:L={l}"), atlas, ChartPoint::new(0, vec![0.5 * l, 0.5 * l]))
        .with_exp_oracle(ExpOracle::Translation)
        .with_volume(l * l)
}

pub fn torus(big_r: f64, r: f64) -> Manifold {
    let chart = Chart::new(
        Arc::new(TorusChart { big_r, r }),
        ChartDomain::periodic(&[2.0 * PI, 2.0 * PI]),
    )
    .with_inverse(move |x| {
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        Some(vec![x[2].atan2(rho - big_r), x[1].atan2(x[0])])
    });
    let atlas = Atlas {
        charts: vec![chart],
        dim: 2,
        ambient_dim: 3,
    };
    Manifold::parameterized(format!("torus:R={big_r},r={r}"), atlas, ChartPoint::new(0, vec![0.0, 0.0]))
        .with_volume(4.0 * PI * PI * big_r * r)
}

/// `S²` with charts `(θ, ϕ) ↦ Q(sin θ cos ϕ, sin θ sin ϕ, cos θ)`, θ ∈ (0, π),
/// for `Q = I` (poles on the z axis) and the cyclic permutation putting the
/// poles on the x axis.
pub fn sphere_param() -> Manifold {
    let chart = |perm: [usize; 3]| {
        Chart::new(
            Arc::new(SphericalChart { perm }),
            ChartDomain {
                coords: vec![
                    CoordinateRange::Interval { lo: 0.0, hi: PI },
                    CoordinateRange::Periodic { period: 2.0 * PI },
                ],
            },
        )
        .with_inverse(move |x| {
            // local (a, b, c) with x[perm[i]] = local[i]
            let a = x[perm[0]];
            let b = x[perm[1]];
            let c = x[perm[2]];
            let rn = (a * a + b * b + c * c).sqrt();
            Some(vec![(c / rn).clamp(-1.0, 1.0).acos(), b.atan2(a)])
        })
    };
    let atlas = Atlas {
        charts: vec![chart([0, 1, 2]), chart([1, 2, 0])],
        dim: 2,
        ambient_dim: 3,
    };
    Manifold::parameterized("sphere-param", atlas, ChartPoint::new(0, vec![PI / 2.0, 0.0]))
        .with_exp_oracle(ExpOracle::Sphere)
        .with_volume(4.0 * PI)
}

/// `Σ x_i²·inv_sq_i − 1`.
#[derive(Debug, Clone)]
struct Quadric {
    inv_sq: Vec<f64>,
}

impl Quadric {
    fn sphere(n: usize) -> Self {
        Self {
            inv_sq: vec![1.0; n],
        }
    }
}

impl SmoothMap for Quadric {
    fn in_dim(&self) -> usize {
        self.inv_sq.len()
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![
            x.iter().zip(&self.inv_sq).map(|(v, w)| v * v * w).sum::<f64>() - 1.0,
        ])
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        let n = self.inv_sq.len();
        let grad: Vec<f64> = x.iter().zip(&self.inv_sq).map(|(v, w)| 2.0 * v * w).collect();
        let hess = Mat::diagonal(&self.inv_sq.iter().map(|w| 2.0 * w).collect::<Vec<_>>());
        Ok(MapJet {
            value: self.value(x)?,
            jacobian: Mat::from_rows(1, n, grad),
            hessians: Some(vec![hess]),
        })
    }
}

/// `(x²(1 − x²) − y²)² + z² − 0.01`.
#[derive(Debug, Clone, Copy)]
struct Genus2;

impl SmoothMap for Genus2 {
    fn in_dim(&self) -> usize {
        3
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn value(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (x, y, z) = (p[0], p[1], p[2]);
        let h = x * x * (1.0 - x * x) - y * y;
        Ok(vec![h * h + z * z - 0.01])
    }

    fn jets(&self, p: &[f64]) -> Result<MapJet> {
        let (x, y, z) = (p[0], p[1], p[2]);
        let h = x * x * (1.0 - x * x) - y * y;
        let hx = 2.0 * x - 4.0 * x * x * x;
        let hy = -2.0 * y;
        let hxx = 2.0 - 12.0 * x * x;
        let hyy = -2.0;
        let jac = Mat::from_rows(1, 3, vec![2.0 * h * hx, 2.0 * h * hy, 2.0 * z]);
        let hess = Mat::from_rows(
            3,
            3,
            vec![
                2.0 * (hx * hx + h * hxx),
                2.0 * hx * hy,
                0.0,
                2.0 * hx * hy,
                2.0 * (hy * hy + h * hyy),
                0.0,
                0.0,
                0.0,
                2.0,
            ],
        );
        Ok(MapJet {
            value: vec![h * h + z * z - 0.01],
            jacobian: jac,
            hessians: Some(vec![hess]),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Identity {
    dim: usize,
}

impl SmoothMap for Identity {
    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        Ok(MapJet {
            value: x.to_vec(),
            jacobian: Mat::identity(self.dim),
            hessians: Some(vec![Mat::zeros(self.dim, self.dim); self.dim]),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct TorusChart {
    big_r: f64,
    r: f64,
}

impl SmoothMap for TorusChart {
    fn in_dim(&self) -> usize {
        2
    }

    fn out_dim(&self) -> usize {
        3
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rho = self.big_r + self.r * x[0].cos();
        Ok(vec![rho * x[1].cos(), rho * x[1].sin(), self.r * x[0].sin()])
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        let r = self.r;
        let (ss, cs) = x[0].sin_cos();
        let (st, ct) = x[1].sin_cos();
        let rho = self.big_r + r * cs;
        let jacobian = Mat::from_rows(
            3,
            2,
            vec![-r * ss * ct, -rho * st, -r * ss * st, rho * ct, r * cs, 0.0],
        );
        let hessians = vec![
            Mat::from_rows(2, 2, vec![-r * cs * ct, r * ss * st, r * ss * st, -rho * ct]),
            Mat::from_rows(2, 2, vec![-r * cs * st, -r * ss * ct, -r * ss * ct, -rho * st]),
            Mat::from_rows(2, 2, vec![-r * ss, 0.0, 0.0, 0.0]),
        ];
        Ok(MapJet {
            value: vec![rho * ct, rho * st, r * ss],
            jacobian,
            hessians: Some(hessians),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct SphericalChart {
    /// Ambient index receiving each local coordinate.
    perm: [usize; 3],
}

impl SmoothMap for SphericalChart {
    fn in_dim(&self) -> usize {
        2
    }

    fn out_dim(&self) -> usize {
        3
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jets(x)?.value)
    }

    fn jets(&self, x: &[f64]) -> Result<MapJet> {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        let local = [st * cp, st * sp, ct];
        let local_jac = [[ct * cp, -st * sp], [ct * sp, st * cp], [-st, 0.0]];
        let local_hess = [
            [[-st * cp, -ct * sp], [-ct * sp, -st * cp]],
            [[-st * sp, ct * cp], [ct * cp, -st * sp]],
            [[-ct, 0.0], [0.0, 0.0]],
        ];
        let mut value = vec![0.0; 3];
        let mut jacobian = Mat::zeros(3, 2);
        let mut hessians = vec![Mat::zeros(2, 2); 3];
        for (i, &a) in self.perm.iter().enumerate() {
            value[a] = local[i];
            for j in 0..2 {
                jacobian[(a, j)] = local_jac[i][j];
                for k in 0..2 {
                    hessians[a][(j, k)] = local_hess[i][j][k];
                }
            }
        }
        Ok(MapJet {
            value,
            jacobian,
            hessians: Some(hessians),
        })
    }
}
