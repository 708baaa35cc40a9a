//! Uniform unit tangent directions with respect to the Riemannian metric.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, metric_at, AmbientPoint, Manifold, ManifoldPoint, MetricTensor};
use crate::linalg::{self, SymmetricEigen};

/// Seedable stream of random numbers. Streams with the same seed and
/// different `stream_id` are independent; the position can be saved and
/// restored exactly.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

/// Saved position of a [`RandomStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub stream_id: u64,
    /// ChaCha word position, as a decimal string since JSON has no 128-bit integers.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn state(&self) -> StreamState {
        StreamState {
            seed: self.seed,
            stream_id: self.stream_id,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: &StreamState) -> Self {
        let mut s = Self::new(state.seed, state.stream_id);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Uniform point on `S^{m−1} ⊂ R^m` from normalized Gaussians.
pub fn sample_unit_sphere(m: usize, rng: &mut RandomStream) -> Vec<f64> {
    assert!(m >= 1, "sphere dimension must be positive");
    loop {
        let w: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let r2: f64 = w.iter().map(|x| x * x).sum();
        if r2 > 0.0 {
            let r = r2.sqrt();
            return w.into_iter().map(|x| x / r).collect();
        }
    }
}

/// `ṽ = Σ_i z_i/√Σ_ii V_i` for `g = VΣVᵀ`: maps Euclidean unit vectors to
/// `g`-unit vectors, carrying the uniform law to the uniform law.
pub fn tangent_from_unit(eigen: &SymmetricEigen, z: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut v = vec![0.0; m];
    for (i, zi) in z.iter().enumerate() {
        let s = zi / eigen.values[i].sqrt();
        for (r, vr) in v.iter_mut().enumerate() {
            *vr += s * eigen.vectors[(r, i)];
        }
    }
    v
}

/// Metric-uniform unit chart tangent vector.
pub fn sample_tangent_param(g: &MetricTensor, rng: &mut RandomStream) -> Result<Vec<f64>> {
    let eigen = g.eigen();
    let min = eigen.values[0];
    let max = *eigen.values.last().unwrap_or(&0.0);
    if !(min > 0.0) || min.sqrt() <= geometry::RANK_TOLERANCE * max.sqrt() {
        return Err(Error::DegenerateMetric { min_eigenvalue: min });
    }
    let z = sample_unit_sphere(g.dim(), rng);
    Ok(tangent_from_unit(&eigen, &z))
}

/// Removes the normal part of `u` and normalizes; `None` if `u` is (almost)
/// normal.
pub fn tangent_from_ambient_unit(normals: &[Vec<f64>], u: &[f64]) -> Option<Vec<f64>> {
    let mut w = u.to_vec();
    for q in normals {
        let c = linalg::dot(q, u);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    // second pass against roundoff
    for q in normals {
        let c = linalg::dot(q, &w);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    let r = linalg::norm(&w);
    (r >= 1e-8).then(|| w.into_iter().map(|x| x / r).collect())
}

/// Uniform unit vector of `T_xM` for an implicit manifold: a uniform unit
/// vector of `R^n` with its normal component removed, renormalized.
pub fn sample_tangent_implicit(
    manifold: &Manifold,
    x: &AmbientPoint,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let f = manifold.constraint()?;
    let n = f.in_dim();
    if f.out_dim() >= n {
        return Err(Error::EmptyTangent);
    }
    let df = f.jets(&x.coords)?.jacobian;
    let normals = geometry::normal_basis(&df)?;
    sample_with_normals(&normals, n, rng)
}

pub(crate) fn sample_with_normals(
    normals: &[Vec<f64>],
    n: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    loop {
        let u = sample_unit_sphere(n, rng);
        if let Some(v) = tangent_from_ambient_unit(normals, &u) {
            return Ok(v);
        }
    }
}

/// Metric-uniform unit tangent at `x`, in the point's own representation.
pub fn sample_tangent(
    manifold: &Manifold,
    x: &ManifoldPoint,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    match x {
        ManifoldPoint::Chart(p) => sample_tangent_param(&metric_at(manifold, p)?, rng),
        ManifoldPoint::Ambient(p) => sample_tangent_implicit(manifold, p, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{catalog, ChartPoint};
    use crate::linalg::Mat;
    use crate::validate::stats::ks_test;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_sphere_is_a_fair_sign() {
        let mut rng = RandomStream::new(1, 0);
        let n = 20_000;
        let plus = (0..n)
            .filter(|_| {
                let z = sample_unit_sphere(1, &mut rng);
                assert!(z[0] == 1.0 || z[0] == -1.0);
                z[0] > 0.0
            })
            .count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn circle_angles_are_uniform() {
        let mut rng = RandomStream::new(2, 0);
        let angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let z = sample_unit_sphere(2, &mut rng);
                assert!((linalg::norm(&z) - 1.0).abs() <= 1e-14);
                z[1].atan2(z[0]).rem_euclid(2.0 * PI)
            })
            .collect();
        let (_, p) = ks_test(&angles, |a| a / (2.0 * PI));
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn diagonal_metric_scales_components() {
        let g = MetricTensor {
            g: Mat::diagonal(&[4.0, 1.0]),
        };
        let eig = g.eigen();
        let z = [0.6, 0.8];
        let v = tangent_from_unit(&eig, &z);
        // eigenvalues come in ascending order, so z₁ pairs with the eigenvalue 1
        // (direction e₂) and z₂ with 4 (direction e₁); eigenvectors may carry a sign
        assert!((v[0].abs() - 0.4).abs() < 1e-15 && (v[1].abs() - 0.6).abs() < 1e-15);
        assert!((g.inner(&v, &v) - 1.0).abs() < 1e-15);
        let id = MetricTensor { g: Mat::identity(3) };
        let w = tangent_from_unit(&id.eigen(), &[0.0, 0.6, 0.8]);
        assert!(w.iter().zip([0.0, 0.6, 0.8]).all(|(a, b)| (a.abs() - b).abs() < 1e-15));
    }

    fn random_orthogonal(m: usize, rng: &mut RandomStream) -> Mat {
        let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.normal()).collect()).collect();
        let q = linalg::orthonormalize(&cols, 1e-12);
        let mut out = Mat::zeros(m, m);
        for (j, c) in q.iter().enumerate() {
            for i in 0..m {
                out[(i, j)] = c[i];
            }
        }
        out
    }

    #[test]
    fn metric_unit_norm_for_random_spd_metrics() {
        let mut rng = RandomStream::new(3, 0);
        for trial in 0..10_000 {
            let m = 1 + trial % 6;
            let q = random_orthogonal(m, &mut rng);
            let d: Vec<f64> = (0..m).map(|_| 0.05 + 20.0 * rng.uniform()).collect();
            let g = q.matmul(&Mat::diagonal(&d)).matmul(&q.transpose());
            let metric = MetricTensor { g };
            let v = sample_tangent_param(&metric, &mut rng).unwrap();
            assert!((metric.inner(&v, &v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let g = MetricTensor {
            g: Mat::diagonal(&[1.0, 0.0]),
        };
        let err = sample_tangent_param(&g, &mut RandomStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric { .. }));
    }

    #[test]
    fn north_pole_tangent_drops_z() {
        let u = [0.3, -0.4, 0.866];
        let v = tangent_from_ambient_unit(&[vec![0.0, 0.0, 1.0]], &u).unwrap();
        let r = (0.09f64 + 0.16).sqrt();
        assert!((v[0] - 0.3 / r).abs() < 1e-15 && (v[1] + 0.4 / r).abs() < 1e-15 && v[2] == 0.0);
        assert!(tangent_from_ambient_unit(&[vec![0.0, 0.0, 1.0]], &[0.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn torus_pushforward_is_uniform_on_tangent_circle() {
        let m = catalog::lookup("torus:R=1.1,r=1.0").unwrap();
        let p = ChartPoint::new(0, vec![0.7, 2.0]);
        let chart = m.chart(0).unwrap();
        let jac = chart.map.jets(&p.coords).unwrap().jacobian;
        let g = metric_at(&m, &p).unwrap();
        let e1 = jac.column(0);
        let e2 = jac.column(1);
        let frame = linalg::orthonormalize(&[e1, e2], 1e-12);
        let mut rng = RandomStream::new(4, 0);
        let angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let v = sample_tangent_param(&g, &mut rng).unwrap();
                let w = jac.mul_vec(&v);
                assert!((linalg::norm(&w) - 1.0).abs() < 1e-12);
                linalg::dot(&w, &frame[1]).atan2(linalg::dot(&w, &frame[0])).rem_euclid(2.0 * PI)
            })
            .collect();
        let (_, pval) = ks_test(&angles, |a| a / (2.0 * PI));
        assert!(pval > 0.01, "KS p-value {pval}");
    }

    #[test]
    fn implicit_sphere_tangents_are_uniform() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let x = AmbientPoint::new(vec![0.0, 0.0, 1.0]);
        let mut rng = RandomStream::new(5, 0);
        let angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let v = sample_tangent_implicit(&m, &x, &mut rng).unwrap();
                assert!(v[2].abs() <= 1e-15);
                assert!((linalg::norm(&v) - 1.0).abs() <= 1e-14);
                v[1].atan2(v[0]).rem_euclid(2.0 * PI)
            })
            .collect();
        let (_, p) = ks_test(&angles, |a| a / (2.0 * PI));
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn genus_two_tangents_are_annihilated_by_df() {
        let m = catalog::lookup("genus2").unwrap();
        let x = AmbientPoint::new(vec![1.0, 0.0, 0.1]);
        let df = m.constraint().unwrap().jets(&x.coords).unwrap().jacobian;
        let mut rng = RandomStream::new(6, 0);
        for _ in 0..1000 {
            let v = sample_tangent_implicit(&m, &x, &mut rng).unwrap();
            assert!(linalg::norm(&df.mul_vec(&v)) <= 1e-10 * df.frobenius_norm());
            assert!((linalg::norm(&v) - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn same_seed_and_stream_reproduce_exactly() {
        let m = catalog::lookup("sphere:dim=3").unwrap();
        let x = m.base_point.clone();
        let draw = |seed, stream| {
            let mut rng = RandomStream::new(seed, stream);
            (0..50).map(|_| sample_tangent(&m, &x, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9, 3), draw(9, 3));
        assert_ne!(draw(9, 3), draw(9, 4));
        assert_ne!(draw(9, 3), draw(10, 3));
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut rng = RandomStream::new(12, 5);
        for _ in 0..37 {
            rng.normal();
        }
        let json = serde_json::to_string(&rng.state()).unwrap();
        let mut resumed = RandomStream::from_state(&serde_json::from_str(&json).unwrap());
        let a: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..10).map(|_| resumed.normal()).collect();
        assert_eq!(a, b);
    }

    /// Law of `v` at `Qx` equals `Q·` law at `x`: compare first and second moments.
    #[test]
    fn sphere_sampling_is_rotation_equivariant() {
        let m = catalog::lookup("sphere:dim=2").unwrap();
        let mut rng = RandomStream::new(7, 0);
        let q = random_orthogonal(3, &mut rng);
        let x = vec![0.48, -0.6, 0.64];
        let qx = q.mul_vec(&x);
        let n = 40_000;
        let moments = |p: &[f64], rotate_back: bool, rng: &mut RandomStream| {
            let mut mean = vec![0.0; 3];
            let mut second = Mat::zeros(3, 3);
            for _ in 0..n {
                let mut v = sample_tangent_implicit(&m, &AmbientPoint::new(p.to_vec()), rng).unwrap();
                if rotate_back {
                    v = q.tr_mul_vec(&v);
                }
                for i in 0..3 {
                    mean[i] += v[i] / n as f64;
                    for j in 0..3 {
                        second[(i, j)] += v[i] * v[j] / n as f64;
                    }
                }
            }
            (mean, second)
        };
        let (m1, s1) = moments(&x, false, &mut rng);
        let (m2, s2) = moments(&qx, true, &mut rng);
        let bound = 4.0 / (n as f64).sqrt();
        for i in 0..3 {
            assert!(m1[i].abs() < bound && m2[i].abs() < bound);
            for j in 0..3 {
                // (1/m)(I − xxᵀ) with m = 2
                let target = 0.5 * ((i == j) as u8 as f64 - x[i] * x[j]);
                assert!((s1[(i, j)] - target).abs() < 0.02, "{i}{j}");
                assert!((s2[(i, j)] - target).abs() < 0.02, "{i}{j}");
            }
        }
    }
}
