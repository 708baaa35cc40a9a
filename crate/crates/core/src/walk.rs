//! The retraction-based random walk `x_i = Ret_{x_{i−1}}(ε v_i)` and ensembles of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{metric_at, AmbientPoint, ChartPoint, Manifold, ManifoldPoint};
use crate::retraction::{retract, ProjectionSettings, RetractionKind};
use crate::sampling::{self, RandomStream, StreamState};

/// Environment variable capping the number of ensemble worker threads.
pub const THREADS_ENV: &str = "MANIFOLD_WALK_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub retraction: RetractionKind,
    pub seed: u64,
    pub stream_id: u64,
    /// Defaults to the manifold's base point.
    pub start: Option<ManifoldPoint>,
    /// `c` in the chart margin `c·ε/√λ_min(g)` required before a p-Ret step.
    pub margin_factor: f64,
    pub max_newton_iters: usize,
    pub newton_variant: crate::retraction::NewtonVariant,
    /// Keep every `record_every`-th point (and always the last one).
    pub record_every: usize,
    pub max_restarts: usize,
}

impl WalkConfig {
    pub fn new(epsilon: f64, steps: usize, retraction: RetractionKind, seed: u64) -> Self {
        Self {
            epsilon,
            steps,
            retraction,
            seed,
            stream_id: 0,
            start: None,
            margin_factor: 2.0,
            max_newton_iters: 50,
            newton_variant: crate::retraction::NewtonVariant::FullNewton,
            record_every: 1,
            max_restarts: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::InvalidArgument("max_newton_iters must be at least 1".into()));
        }
        if !(self.margin_factor >= 0.0) {
            return Err(Error::InvalidArgument("margin_factor must be non-negative".into()));
        }
        Ok(())
    }

    fn projection(&self, epsilon: f64) -> ProjectionSettings {
        ProjectionSettings {
            max_iters: self.max_newton_iters,
            threshold_scale: epsilon,
            variant: self.newton_variant,
        }
    }

    fn is_recorded(&self, i: usize) -> bool {
        i % self.record_every == 0 || i == self.steps
    }

    /// Number of points a completed walk records.
    pub fn recorded_len(&self) -> usize {
        self.steps / self.record_every + 1 + usize::from(self.steps % self.record_every != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub index: usize,
    /// `ε²·index` with the final ε.
    pub time: f64,
    pub point: ManifoldPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartEvent {
    /// Step at which the failure happened.
    pub index: usize,
    pub old_epsilon: f64,
    pub new_epsilon: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTrajectory {
    pub seed: u64,
    pub stream_id: u64,
    pub retraction: RetractionKind,
    pub initial_epsilon: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub record_every: usize,
    pub points: Vec<TrajectoryPoint>,
    pub restarts: Vec<RestartEvent>,
}

impl WalkTrajectory {
    pub fn final_point(&self) -> &ManifoldPoint {
        &self.points.last().expect("a trajectory holds at least its start").point
    }
}

/// Exact state of a walk between two steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkCheckpoint {
    pub index: usize,
    pub epsilon: f64,
    pub point: ManifoldPoint,
    pub stream: StreamState,
    pub restarts: Vec<RestartEvent>,
}

fn is_restartable(e: &Error) -> bool {
    matches!(
        e,
        Error::ChartDomainViolation { .. }
            | Error::NoChartWithMargin { .. }
            | Error::NoConvergence { .. }
            | Error::RankDeficient { .. }
    )
}

/// Step-by-step walk driver.
pub struct Walker<'a> {
    manifold: &'a Manifold,
    cfg: WalkConfig,
    start: ManifoldPoint,
    epsilon: f64,
    index: usize,
    current: ManifoldPoint,
    rng: RandomStream,
    restarts: Vec<RestartEvent>,
}

/// What a call to [`Walker::step`] did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Moved,
    /// The walk failed and went back to its start with half the stepsize.
    Restarted,
}

impl<'a> Walker<'a> {
    pub fn new(manifold: &'a Manifold, cfg: WalkConfig) -> Result<Self> {
        cfg.validate()?;
        let start = cfg.start.clone().unwrap_or_else(|| manifold.base_point.clone());
        check_start(manifold, &start)?;
        let rng = RandomStream::new(cfg.seed, cfg.stream_id);
        Ok(Self {
            manifold,
            epsilon: cfg.epsilon,
            current: start.clone(),
            start,
            cfg,
            index: 0,
            rng,
            restarts: Vec::new(),
        })
    }

    /// Continues a walk from a checkpoint taken with the same manifold and config.
    pub fn resume(manifold: &'a Manifold, cfg: WalkConfig, checkpoint: &WalkCheckpoint) -> Result<Self> {
        let mut w = Self::new(manifold, cfg)?;
        w.index = checkpoint.index;
        w.epsilon = checkpoint.epsilon;
        w.current = checkpoint.point.clone();
        w.rng = RandomStream::from_state(&checkpoint.stream);
        w.restarts = checkpoint.restarts.clone();
        Ok(w)
    }

    pub fn checkpoint(&self) -> WalkCheckpoint {
        WalkCheckpoint {
            index: self.index,
            epsilon: self.epsilon,
            point: self.current.clone(),
            stream: self.rng.state(),
            restarts: self.restarts.clone(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn current(&self) -> &ManifoldPoint {
        &self.current
    }

    pub fn restarts(&self) -> &[RestartEvent] {
        &self.restarts
    }

    pub fn is_done(&self) -> bool {
        self.index >= self.cfg.steps
    }

    /// One step of the walk; on a chart or projection failure, restarts the
    /// whole walk from its start with `ε/2`.
    pub fn step(&mut self) -> Result<StepOutcome> {
        match self.try_step() {
            Ok(next) => {
                self.current = next;
                self.index += 1;
                Ok(StepOutcome::Moved)
            }
            Err(e) if is_restartable(&e) => {
                if self.restarts.len() >= self.cfg.max_restarts {
                    return Err(Error::TooManyRestarts {
                        restarts: self.restarts.len(),
                        epsilon: self.epsilon,
                    });
                }
                let new_epsilon = 0.5 * self.epsilon;
                self.restarts.push(RestartEvent {
                    index: self.index,
                    old_epsilon: self.epsilon,
                    new_epsilon,
                    reason: e.to_string(),
                });
                self.epsilon = new_epsilon;
                self.index = 0;
                self.current = self.start.clone();
                Ok(StepOutcome::Restarted)
            }
            Err(e) => Err(e),
        }
    }

    fn try_step(&mut self) -> Result<ManifoldPoint> {
        let eps = self.epsilon;
        let x = match &self.current {
            ManifoldPoint::Chart(p) => {
                let (p, eig) = self.chart_for_step(p)?;
                let z = sampling::sample_unit_sphere(p.coords.len(), &mut self.rng);
                let v = sampling::tangent_from_unit(&eig, &z);
                let step: Vec<f64> = v.iter().map(|c| eps * c).collect();
                return retract(
                    self.manifold,
                    self.cfg.retraction,
                    &ManifoldPoint::Chart(p),
                    &step,
                    &self.cfg.projection(eps),
                );
            }
            ManifoldPoint::Ambient(a) => a,
        };
        let v = sampling::sample_tangent_implicit(self.manifold, x, &mut self.rng)?;
        let step: Vec<f64> = v.iter().map(|c| eps * c).collect();
        retract(
            self.manifold,
            self.cfg.retraction,
            &self.current,
            &step,
            &self.cfg.projection(eps),
        )
    }

    /// Keeps the current chart when it has margin `c·ε/√λ_min(g)`, otherwise
    /// the lowest-id chart that does.
    fn chart_for_step(&self, p: &ChartPoint) -> Result<(ChartPoint, crate::linalg::SymmetricEigen)> {
        let qualifies = |q: &ChartPoint| -> Result<Option<crate::linalg::SymmetricEigen>> {
            let chart = self.manifold.chart(q.chart)?;
            let eig = metric_at(self.manifold, q)?.eigen();
            let needed = self.cfg.margin_factor * self.epsilon / eig.values[0].sqrt();
            Ok((chart.domain.margin(&q.coords) >= needed).then_some(eig))
        };
        if let Some(eig) = qualifies(p)? {
            return Ok((p.clone(), eig));
        }
        let x = self.manifold.ambient(&ManifoldPoint::Chart(p.clone()))?;
        let atlas = self.manifold.atlas()?;
        for (id, chart) in atlas.charts.iter().enumerate() {
            if id == p.chart {
                continue;
            }
            if let Some(coords) = chart.coordinates_of(&x) {
                let q = ChartPoint::new(id, coords);
                if let Some(eig) = qualifies(&q)? {
                    return Ok((q, eig));
                }
            }
        }
        Err(Error::NoChartWithMargin {
            margin: self.cfg.margin_factor * self.epsilon,
        })
    }
}

fn check_start(manifold: &Manifold, start: &ManifoldPoint) -> Result<()> {
    match start {
        ManifoldPoint::Chart(p) => {
            manifold.ambient(start)?;
            if p.coords.len() != manifold.intrinsic_dim() {
                return Err(Error::DimensionError("start point has the wrong dimension".into()));
            }
        }
        ManifoldPoint::Ambient(AmbientPoint { coords }) => {
            if coords.len() != manifold.ambient_dim() {
                return Err(Error::DimensionError("start point has the wrong dimension".into()));
            }
            let r = manifold.constraint_residual(coords)?;
            if !(r <= 1e-8) {
                return Err(Error::InvalidArgument(format!(
                    "start point is not on the manifold (residual {r:.3e})"
                )));
            }
        }
    }
    Ok(())
}

/// Runs a walk, handing every recorded point to `visit`. `on_restart` is
/// called whenever the walk restarts, so that consumers can drop what they
/// have seen so far.
pub fn run_walk_streaming<'a>(
    manifold: &'a Manifold,
    cfg: &WalkConfig,
    mut visit: impl FnMut(usize, &ManifoldPoint),
    mut on_restart: impl FnMut(),
) -> Result<Walker<'a>> {
    let mut w = Walker::new(manifold, cfg.clone())?;
    visit(0, &w.current);
    while !w.is_done() {
        match w.step()? {
            StepOutcome::Moved => {
                if cfg.is_recorded(w.index) {
                    visit(w.index, &w.current);
                }
            }
            StepOutcome::Restarted => {
                on_restart();
                visit(0, &w.current);
            }
        }
    }
    Ok(w)
}

/// Runs one walk and returns its recorded points.
pub fn run_walk(manifold: &Manifold, cfg: &WalkConfig) -> Result<WalkTrajectory> {
    let mut recorded: Vec<(usize, ManifoldPoint)> = Vec::with_capacity(cfg.recorded_len().min(1 << 24));
    let w = run_walk_streaming(
        manifold,
        cfg,
        |i, p| recorded.push((i, p.clone())),
        || {},
    )?;
    // keep only the last attempt
    let last_start = recorded.iter().rposition(|(i, _)| *i == 0).unwrap_or(0);
    let eps = w.epsilon;
    let points = recorded
        .drain(last_start..)
        .map(|(index, point)| TrajectoryPoint {
            index,
            time: eps * eps * index as f64,
            point,
        })
        .collect();
    Ok(WalkTrajectory {
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        retraction: cfg.retraction,
        initial_epsilon: cfg.epsilon,
        epsilon: eps,
        steps: cfg.steps,
        record_every: cfg.record_every,
        points,
        restarts: w.restarts.clone(),
    })
}

/// Worker count: `MANIFOLD_WALK_THREADS` if set to a positive integer, else
/// the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `walkers` independent walks, walker `j` on stream `j`, and applies
/// `reduce` to each trajectory. Results are in walker order whatever the
/// number of threads.
pub fn map_ensemble<T, F>(
    manifold: &Manifold,
    cfg: &WalkConfig,
    walkers: usize,
    threads: usize,
    reduce: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, WalkTrajectory) -> T + Send + Sync,
{
    if walkers == 0 {
        return Err(Error::InvalidArgument("an ensemble needs at least one walker".into()));
    }
    cfg.validate()?;
    let one = |j: usize| -> Result<T> {
        let mut c = cfg.clone();
        c.stream_id = j as u64;
        run_walk(manifold, &c)
            .map(|t| reduce(j, t))
            .map_err(|e| Error::Walker {
                index: j,
                source: Box::new(e),
            })
    };
    let results: Vec<Result<T>> = run_indexed(walkers, threads, one);
    results.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn run_indexed<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> Result<T> + Send + Sync) -> Vec<Result<T>> {
    use rayon::prelude::*;
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T: Send>(n: usize, _threads: usize, f: impl Fn(usize) -> Result<T> + Send + Sync) -> Vec<Result<T>> {
    (0..n).map(f).collect()
}

/// `walkers` independent walks; walker `j` uses stream `j`.
pub fn run_ensemble(manifold: &Manifold, cfg: &WalkConfig, walkers: usize) -> Result<Vec<WalkTrajectory>> {
    map_ensemble(manifold, cfg, walkers, thread_count(), |_, t| t)
}
