use serde::{Deserialize, Serialize};

use super::stats;
use crate::error::{Error, Result};
use crate::geometry::{self, catalog, ChartPoint, CoordinateRange, Manifold, ManifoldPoint};
use crate::linalg;
use crate::sampling::RandomStream;
use crate::walk::WalkTrajectory;

/// Steps for a walk to come within `δ` of every point:
/// `(2A/π)(log δ/ε)²` for surfaces, `m κ (−δ^{2−m} log δ)/ε²` with
/// `κ = 2V/((m−2)ω_m)` above.
pub fn cover_time_steps(m: usize, size: f64, delta: f64, epsilon: f64) -> Result<u64> {
    if m < 2 {
        return Err(Error::DimensionError(format!(
            "cover time needs dimension at least 2, got {m}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    if !(epsilon > 0.0) || !(size > 0.0) {
        return Err(Error::InvalidArgument("epsilon and size must be positive".into()));
    }
    let ld = delta.ln();
    let n = if m == 2 {
        2.0 * size / std::f64::consts::PI * (ld / epsilon).powi(2)
    } else {
        let mf = m as f64;
        let kappa = 2.0 * size / ((mf - 2.0) * catalog::unit_sphere_measure(m));
        mf * kappa * (-delta.powf(2.0 - mf) * ld) / (epsilon * epsilon)
    };
    Ok(n.max(0.0).ceil() as u64)
}

/// Samples to discard: the larger of 10% and the cover time at `δ = 0.05`.
pub fn burn_in_length(total: usize, cover_steps: u64) -> usize {
    let tenth = total.div_ceil(10);
    tenth.max(cover_steps.min(total as u64) as usize)
}

/// How samples are assigned to bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// Equal-width bins of one chart's coordinates. `axes` selects the
    /// coordinates binned (a marginal when not all of them); `bins[a]` is
    /// the count along `axes[a]`. The chart must cover the manifold up to a
    /// null set.
    ChartGrid {
        chart: usize,
        axes: Vec<usize>,
        bins: Vec<usize>,
    },
    /// Axis-aligned ambient cells of a box. Expected masses come from
    /// uniform points of the box in a thin shell `|f| ≤ shell`, weighted by
    /// `√det(df dfᵀ)` (co-area formula).
    AmbientCells {
        lo: Vec<f64>,
        hi: Vec<f64>,
        bins: Vec<usize>,
        shell: f64,
        reference_samples: usize,
        seed: u64,
    },
}

impl Binning {
    /// Full grid over all coordinates of a chart.
    pub fn chart_grid(chart: usize, bins: Vec<usize>) -> Self {
        let axes = (0..bins.len()).collect();
        Binning::ChartGrid { chart, axes, bins }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTest {
    /// Bin centers in binned coordinates.
    pub centers: Vec<Vec<f64>>,
    pub observed: Vec<u64>,
    /// Sums to 1.
    pub expected: Vec<f64>,
    pub samples: u64,
    /// Samples falling outside every bin (never counted in `observed`).
    pub outside: u64,
    pub total_variation: f64,
    pub chi_square: f64,
}

fn axis_range(r: &CoordinateRange) -> (f64, f64) {
    match *r {
        CoordinateRange::Periodic { period } => (0.0, period),
        CoordinateRange::Interval { lo, hi } => (lo, hi),
    }
}

fn flat_index(cell: &[usize], bins: &[usize]) -> usize {
    cell.iter().zip(bins).fold(0, |acc, (c, b)| acc * b + c)
}

fn cell_of(x: &[f64], lo: &[f64], hi: &[f64], bins: &[usize]) -> Option<Vec<usize>> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .zip(bins)
        .map(|((&v, (&l, &h)), &b)| {
            if !(v >= l && v < h) {
                return None;
            }
            Some((((v - l) / (h - l) * b as f64) as usize).min(b - 1))
        })
        .collect()
}

/// Incremental histogram of manifold points against a [`Binning`].
#[derive(Debug, Clone)]
pub struct DensityAccumulator<'a> {
    manifold: &'a Manifold,
    binning: Binning,
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<u64>,
    outside: u64,
}

impl<'a> DensityAccumulator<'a> {
    pub fn new(manifold: &'a Manifold, binning: Binning) -> Result<Self> {
        let (lo, hi, nbins) = match &binning {
            Binning::ChartGrid { chart, axes, bins } => {
                let c = manifold.chart(*chart)?;
                if axes.is_empty() || axes.len() != bins.len() || axes.iter().any(|&a| a >= c.domain.dim()) {
                    return Err(Error::InvalidArgument("bins must name distinct chart axes".into()));
                }
                let ranges: Vec<(f64, f64)> = axes.iter().map(|&a| axis_range(&c.domain.coords[a])).collect();
                (
                    ranges.iter().map(|r| r.0).collect(),
                    ranges.iter().map(|r| r.1).collect(),
                    bins.clone(),
                )
            }
            Binning::AmbientCells { lo, hi, bins, .. } => {
                manifold.constraint()?;
                let n = manifold.ambient_dim();
                if lo.len() != n || hi.len() != n || bins.len() != n || lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
                    return Err(Error::InvalidArgument("ambient cells need one range per coordinate".into()));
                }
                (lo.clone(), hi.clone(), bins.clone())
            }
        };
        if nbins.iter().any(|&b| b == 0) {
            return Err(Error::InvalidArgument("bin counts must be positive".into()));
        }
        let total = nbins.iter().product();
        Ok(Self {
            manifold,
            binning,
            lo,
            hi,
            counts: vec![0; total],
            outside: 0,
        })
    }

    fn bins(&self) -> &[usize] {
        match &self.binning {
            Binning::ChartGrid { bins, .. } | Binning::AmbientCells { bins, .. } => bins,
        }
    }

    pub fn add(&mut self, p: &ManifoldPoint) -> Result<()> {
        let coords: Option<Vec<f64>> = match &self.binning {
            Binning::ChartGrid { chart, axes, .. } => {
                let native = match p {
                    ManifoldPoint::Chart(q) if q.chart == *chart => Some(q.coords.clone()),
                    _ => self.manifold.chart(*chart)?.coordinates_of(&self.manifold.ambient(p)?),
                };
                native.map(|c| axes.iter().map(|&a| c[a]).collect())
            }
            Binning::AmbientCells { .. } => Some(self.manifold.ambient(p)?),
        };
        match coords.and_then(|c| cell_of(&c, &self.lo, &self.hi, self.bins())) {
            Some(cell) => {
                let i = flat_index(&cell, self.bins());
                self.counts[i] += 1;
            }
            None => self.outside += 1,
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.outside = 0;
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    /// Compares the histogram with the volume measure.
    pub fn finish(&self) -> Result<DensityTest> {
        let expected = match &self.binning {
            Binning::ChartGrid { chart, axes, bins } => {
                chart_expected(self.manifold, *chart, axes, bins)?
            }
            Binning::AmbientCells {
                shell,
                reference_samples,
                seed,
                ..
            } => ambient_expected(self.manifold, &self.lo, &self.hi, self.bins(), *shell, *reference_samples, *seed)?,
        };
        let samples = self.samples();
        let min_expected = expected.iter().fold(f64::INFINITY, |a, &p| a.min(p)) * samples as f64;
        if !(min_expected >= 5.0) {
            return Err(Error::InsufficientSamples { min_expected });
        }
        let bins = self.bins();
        let centers = (0..self.counts.len())
            .map(|flat| {
                let mut rest = flat;
                let mut c = vec![0.0; bins.len()];
                for a in (0..bins.len()).rev() {
                    let k = rest % bins[a];
                    rest /= bins[a];
                    c[a] = self.lo[a] + (k as f64 + 0.5) * (self.hi[a] - self.lo[a]) / bins[a] as f64;
                }
                c
            })
            .collect();
        Ok(DensityTest {
            centers,
            total_variation: stats::total_variation(&self.counts, &expected),
            chi_square: stats::chi_square(&self.counts, &expected),
            observed: self.counts.clone(),
            expected,
            samples,
            outside: self.outside,
        })
    }
}

/// Sub-cells per bin (binned axes) and per axis (integrated axes) in the
/// midpoint rule for `∫ √|g|`.
const SUBDIVISION: usize = 8;
const MARGINAL_CELLS: usize = 64;

fn chart_expected(manifold: &Manifold, chart: usize, axes: &[usize], bins: &[usize]) -> Result<Vec<f64>> {
    let c = manifold.chart(chart)?;
    let m = c.domain.dim();
    let ranges: Vec<(f64, f64)> = c.domain.coords.iter().map(axis_range).collect();
    let cells: Vec<usize> = (0..m)
        .map(|d| match axes.iter().position(|&a| a == d) {
            Some(k) => bins[k] * SUBDIVISION,
            None => MARGINAL_CELLS,
        })
        .collect();
    let total: usize = cells.iter().product();
    let mut mass = vec![0.0; bins.iter().product()];
    let mut idx = vec![0usize; m];
    for flat in 0..total {
        let mut rest = flat;
        for d in (0..m).rev() {
            idx[d] = rest % cells[d];
            rest /= cells[d];
        }
        let x: Vec<f64> = (0..m)
            .map(|d| ranges[d].0 + (idx[d] as f64 + 0.5) * (ranges[d].1 - ranges[d].0) / cells[d] as f64)
            .collect();
        let g = geometry::metric_at(manifold, &ChartPoint::new(chart, x))?;
        let w = g.determinant().max(0.0).sqrt();
        let cell: Vec<usize> = axes.iter().map(|&a| idx[a] / SUBDIVISION).collect();
        mass[flat_index(&cell, bins)] += w;
    }
    let sum: f64 = mass.iter().sum();
    Ok(mass.into_iter().map(|w| w / sum).collect())
}

fn ambient_expected(
    manifold: &Manifold,
    lo: &[f64],
    hi: &[f64],
    bins: &[usize],
    shell: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let f = manifold.constraint()?;
    let n = lo.len();
    let mut rng = RandomStream::new(seed, u64::MAX);
    let mut mass = vec![0.0; bins.iter().product()];
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for d in 0..n {
            x[d] = lo[d] + (hi[d] - lo[d]) * rng.uniform();
        }
        let value = f.value(&x)?;
        if linalg::norm(&value) > shell {
            continue;
        }
        let df = f.jets(&x)?.jacobian;
        let w = linalg::symmetric_eigen(&df.outer_gram())
            .values
            .iter()
            .product::<f64>()
            .max(0.0)
            .sqrt();
        if let Some(cell) = cell_of(&x, lo, hi, bins) {
            mass[flat_index(&cell, bins)] += w;
        }
    }
    let sum: f64 = mass.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::InsufficientSamples { min_expected: 0.0 });
    }
    Ok(mass.into_iter().map(|w| w / sum).collect())
}

/// Histogram of a trajectory after burn-in against the volume measure.
/// Burn-in is the larger of 10% of the points and the cover time at
/// `δ = 0.05` (in recorded points), when the volume is known.
pub fn stationary_density_test(
    trajectory: &WalkTrajectory,
    manifold: &Manifold,
    binning: Binning,
) -> Result<DensityTest> {
    let cover = match manifold.volume {
        Some(v) if manifold.intrinsic_dim() >= 2 => {
            cover_time_steps(manifold.intrinsic_dim(), v, 0.05, trajectory.epsilon)? / trajectory.record_every as u64
        }
        _ => 0,
    };
    let skip = burn_in_length(trajectory.points.len(), cover);
    let mut acc = DensityAccumulator::new(manifold, binning)?;
    for p in &trajectory.points[skip..] {
        acc.add(&p.point)?;
    }
    acc.finish()
}
