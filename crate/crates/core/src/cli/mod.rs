//! The `manifold-walk` command line tool.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 when
//! the numerics fail (for example too many step-size halvings).

pub mod config;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{catalog, ExpOracle, Manifold, ManifoldPoint};
use crate::retraction::{ProjectionSettings, RetractionKind, StandardRetraction};
use crate::sampling::RandomStream;
use crate::validate::{self, Binning, DensityAccumulator, Observable, Quadrature, ValidationReport};
use crate::walk::{self, map_ensemble, StepOutcome, WalkConfig, Walker};

pub use config::{ManifoldSpec, RunConfig};

const EXPRESSION_HELP: &str = "\
Manifolds:
  --manifold takes a catalog spec `name:key=value,...` (see `list-manifolds`),
  or declare one in a config file:
    manifold = implicit { dim_ambient = 3, f = [\"(x^2 (1 - x^2) - y^2)^2 + z^2 - 0.01\"] }
    manifold = parametric { dim = 2, phi = [\"cos(y)(2+cos(x))\", \"sin(y)(2+cos(x))\", \"sin(x)\"], periodic = [2pi, 2pi] }

Expressions:
  numbers, pi, + - * / ^ (constant exponents), sin cos exp log sqrt, and
  juxtaposition for products (`2x`, `x y`, `x(1 - x)`). Variables are x, y, z
  for up to three coordinates and x1 ... xd otherwise.

Config files hold `key = value` lines (# starts a comment). Keys match the
long flags with `-` written as `_`; flags override the file.

Environment:
  MANIFOLD_WALK_THREADS caps the number of worker threads.";

#[derive(Debug, Parser)]
#[command(
    name = "manifold-walk",
    version,
    about = "Retraction-based random walks and Brownian motion on compact manifolds",
    after_help = EXPRESSION_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one walk and write its trajectory as CSV.
    Walk(RunArgs),
    /// Run independent walks and write their final points as CSV.
    Ensemble(RunArgs),
    /// Empirical checks, written as JSON reports.
    Validate {
        #[command(subcommand)]
        test: ValidateCommand,
    },
    /// Step count from the δ-cover-time heuristic.
    Covertime(RunArgs),
    /// Print the built-in manifolds.
    ListManifolds,
}

#[derive(Debug, Subcommand)]
enum ValidateCommand {
    /// Log-log slope of the distance between retraction and exponential map.
    Order(RunArgs),
    /// Convergence of the rescaled one-step operator to ½Δ.
    Generator(RunArgs),
    /// Zonal-harmonic decay of an ensemble on the unit 2-sphere.
    Heat(RunArgs),
    /// Histogram of a long walk against the volume measure.
    Density(RunArgs),
    /// Tangential covariant acceleration of the retraction.
    Accel(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog spec, e.g. `torus:R=1.1` or `sphere:dim=2`.
    #[arg(long)]
    manifold: Option<String>,
    /// pret | piret | exact | ode (default: pret for charts, piret for implicit).
    #[arg(long)]
    retraction: Option<String>,
    /// Step size ε.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every k-th point of a walk.
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    walkers: Option<usize>,
    /// Output file.
    #[arg(long)]
    out: Option<String>,
    /// Ball radius of the cover-time heuristic.
    #[arg(long)]
    delta: Option<f64>,
    /// Area or volume for the cover time (default: the manifold's).
    #[arg(long)]
    size: Option<f64>,
    /// Zonal harmonic degree for the heat test.
    #[arg(long)]
    degree: Option<usize>,
    /// Brownian time for the heat test.
    #[arg(long)]
    time: Option<f64>,
    /// Random (x, v) pairs per step size for the order test.
    #[arg(long)]
    trials: Option<usize>,
    /// Random base points for the generator and acceleration tests.
    #[arg(long)]
    points: Option<usize>,
    /// Monte Carlo samples (tangent averages in dimension > 2, reference
    /// masses of ambient density cells).
    #[arg(long)]
    samples: Option<usize>,
    /// Bin counts, comma separated.
    #[arg(long)]
    bins: Option<String>,
    /// Chart axes to bin (a marginal when fewer than the dimension).
    #[arg(long)]
    axes: Option<String>,
    /// Test function in ambient coordinates for the generator test.
    #[arg(long)]
    observable: Option<String>,
    /// Start point: chart-0 coordinates, or ambient coordinates for implicit manifolds.
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<RunConfig> {
        let list = |key: &str, text: &Option<String>| -> Result<Option<Vec<usize>>> {
            text.as_deref()
                .map(|t| {
                    config::split_list(t)
                        .into_iter()
                        .map(|s| config::integer(key, s).map(|n| n as usize))
                        .collect()
                })
                .transpose()
        };
        Ok(RunConfig {
            manifold: self.manifold.clone().map(|spec| ManifoldSpec::Catalog { spec }),
            retraction: self.retraction.as_deref().map(config::parse_retraction).transpose()?,
            epsilon: self.eps,
            steps: self.steps,
            seed: self.seed,
            record_every: self.record_every,
            walkers: self.walkers,
            out: self.out.clone(),
            delta: self.delta,
            size: self.size,
            degree: self.degree,
            time: self.time,
            trials: self.trials,
            points: self.points,
            samples: self.samples,
            bins: list("bins", &self.bins)?,
            axes: list("axes", &self.axes)?,
            observable: self.observable.clone(),
            start: self
                .start
                .as_deref()
                .map(|t| config::split_list(t).into_iter().map(|s| config::number("start", s)).collect())
                .transpose()?,
        })
    }
}

/// Reads the config file (if any), applies the flags on top and validates.
fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config {
                key: "config".into(),
                reason: format!("cannot read {}: {e}", path.display()),
            })?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.overlay(args.overrides()?);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::ListManifolds => {
            for e in catalog::ENTRIES {
                let params = if e.parameters.is_empty() {
                    String::new()
                } else {
                    format!(":{}", e.parameters)
                };
                println!("{:<32} {}", format!("{}{}", e.name, params), e.description);
            }
            Ok(())
        }
        Command::Walk(a) => cmd_walk(&load_config(&a)?),
        Command::Ensemble(a) => cmd_ensemble(&load_config(&a)?),
        Command::Covertime(a) => cmd_covertime(&load_config(&a)?),
        Command::Validate { test } => match test {
            ValidateCommand::Order(a) => cmd_order(&load_config(&a)?),
            ValidateCommand::Generator(a) => cmd_generator(&load_config(&a)?),
            ValidateCommand::Heat(a) => cmd_heat(&load_config(&a)?),
            ValidateCommand::Density(a) => cmd_density(&load_config(&a)?),
            ValidateCommand::Accel(a) => cmd_accel(&load_config(&a)?),
        },
    }
}

fn manifold_of(cfg: &RunConfig) -> Result<Manifold> {
    cfg.manifold
        .as_ref()
        .ok_or_else(|| Error::Config {
            key: "manifold".into(),
            reason: "missing (use --manifold or a config file)".into(),
        })?
        .build()
}

/// Fills the walk parameters of `cfg` with defaults and builds the walk config.
fn walk_config(cfg: &mut RunConfig, manifold: &Manifold, eps: f64, steps: usize) -> Result<WalkConfig> {
    let kind = *cfg.retraction.get_or_insert(RetractionKind::default_for(manifold));
    let mut wc = WalkConfig::new(
        *cfg.epsilon.get_or_insert(eps),
        *cfg.steps.get_or_insert(steps),
        kind,
        *cfg.seed.get_or_insert(0),
    );
    wc.record_every = *cfg.record_every.get_or_insert(1);
    if let Some(s) = &cfg.start {
        wc.start = Some(config::start_point(manifold, s)?);
    }
    wc.validate()?;
    Ok(wc)
}

fn retraction_of(cfg: &mut RunConfig, manifold: &Manifold) -> StandardRetraction {
    let kind = *cfg.retraction.get_or_insert(RetractionKind::default_for(manifold));
    StandardRetraction::new(kind, ProjectionSettings::default())
}

fn out_path(cfg: &mut RunConfig, default: &str) -> PathBuf {
    PathBuf::from(cfg.out.get_or_insert_with(|| default.to_string()).clone())
}

fn cmd_walk(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let wc = walk_config(&mut cfg, &manifold, 0.1, 1000)?;
    let path = out_path(&mut cfg, "walk.csv");
    let mut file = output::CsvFile::create(&path, &output::trajectory_header(&manifold))?;
    let mut walker = Walker::new(&manifold, wc.clone())?;
    let mut rows = 1usize;
    file.row(&output::trajectory_row(&manifold, 0, 0.0, walker.current())?)?;
    while !walker.is_done() {
        match walker.step()? {
            StepOutcome::Moved => {
                let i = walker.index();
                if i % wc.record_every == 0 || i == wc.steps {
                    let e = walker.epsilon();
                    file.row(&output::trajectory_row(&manifold, i, e * e * i as f64, walker.current())?)?;
                    rows += 1;
                }
            }
            StepOutcome::Restarted => {
                file.rewind()?;
                file.row(&output::trajectory_row(&manifold, 0, 0.0, walker.current())?)?;
                rows = 1;
            }
        }
    }
    file.finish()?;
    let result = json!({
        "rows": rows,
        "final_epsilon": walker.epsilon(),
        "restarts": walker.restarts(),
    });
    output::write_meta(&path, "walk", &cfg, result)?;
    println!(
        "walk on {}: {} steps with {} (eps {}), {} restarts, {} rows -> {}",
        manifold.name,
        wc.steps,
        wc.retraction.name(),
        walker.epsilon(),
        walker.restarts().len(),
        rows,
        path.display()
    );
    Ok(())
}

fn cmd_ensemble(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let wc = walk_config(&mut cfg, &manifold, 0.1, 100)?;
    let walkers = *cfg.walkers.get_or_insert(100);
    let path = out_path(&mut cfg, "ensemble.csv");
    let finals = map_ensemble(&manifold, &wc, walkers, walk::thread_count(), |_, t| {
        (t.final_point().clone(), t.restarts.len(), t.epsilon)
    })?;
    let mut file = output::CsvFile::create(&path, &output::ensemble_header(&manifold))?;
    for (j, (p, restarts, eps)) in finals.iter().enumerate() {
        file.row(&output::ensemble_row(&manifold, j, *restarts, *eps, p)?)?;
    }
    file.finish()?;
    let total: usize = finals.iter().map(|f| f.1).sum();
    output::write_meta(&path, "ensemble", &cfg, json!({ "walkers": walkers, "restarts": total }))?;
    println!(
        "ensemble on {}: {walkers} walkers x {} steps, {total} restarts -> {}",
        manifold.name,
        wc.steps,
        path.display()
    );
    Ok(())
}

fn cmd_covertime(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let m = manifold.intrinsic_dim();
    let size = match cfg.size.or(manifold.volume) {
        Some(s) => s,
        None => {
            return Err(Error::Config {
                key: "size".into(),
                reason: "the manifold's volume is not known; pass --size".into(),
            })
        }
    };
    cfg.size = Some(size);
    let delta = *cfg.delta.get_or_insert(0.05);
    let eps = *cfg.epsilon.get_or_insert(0.1);
    let n = validate::cover_time_steps(m, size, delta, eps)?;
    if let Some(out) = &cfg.out {
        output::write_json(Path::new(out), &json!({ "config": &cfg, "dimension": m, "steps": n }))?;
    }
    println!("cover time on {} (m = {m}, size {size}, delta {delta}, eps {eps}): {n} steps", manifold.name);
    Ok(())
}

fn report(path: &Path, r: &ValidationReport) -> Result<()> {
    output::write_json(path, r)?;
    println!(
        "{} {}: statistic {:.6e}, threshold {:.6e} -> {}",
        if r.pass { "PASS" } else { "FAIL" },
        r.test,
        r.statistic,
        r.threshold,
        path.display()
    );
    Ok(())
}

fn params(cfg: &RunConfig) -> Result<serde_json::Value> {
    serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))
}

fn cmd_order(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let ret = retraction_of(&mut cfg, &manifold);
    let trials = *cfg.trials.get_or_insert(32);
    let mut rng = RandomStream::new(*cfg.seed.get_or_insert(0), 0);
    let taus = validate::log_spaced(1e-3, 10f64.powf(-1.5), 8);
    let fit = validate::retraction_order_fit(&manifold, &ret, trials, &taus, &mut rng)?;
    let path = out_path(&mut cfg, "order.json");
    let pass = (2.7..=3.3).contains(&fit.slope);
    let r = ValidationReport::new("order", params(&cfg)?, fit.slope, 2.7, pass)
        .with_details(json!({ "band": [2.7, 3.3], "fit": fit }));
    report(&path, &r)
}

fn default_observable(n: usize) -> String {
    match n {
        1 => "x".into(),
        2 => "y".into(),
        3 => "z".into(),
        _ => format!("x{n}"),
    }
}

fn cmd_generator(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let ret = retraction_of(&mut cfg, &manifold);
    let n = manifold.ambient_dim();
    let text = cfg.observable.get_or_insert_with(|| default_observable(n)).clone();
    let f = Observable::parse(&text, n)?;
    let eps = *cfg.epsilon.get_or_insert(0.1);
    let seed = *cfg.seed.get_or_insert(0);
    let mut rng = RandomStream::new(seed, 0);
    let points = (0..*cfg.points.get_or_insert(16))
        .map(|_| validate::random_point(&manifold, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let quadrature = if manifold.intrinsic_dim() <= 2 {
        Quadrature::AngleGrid { points: 256 }
    } else {
        Quadrature::MonteCarlo {
            samples: *cfg.samples.get_or_insert(4096),
            seed,
        }
    };
    let epsilons = [eps, eps / 2.0, eps / 4.0];
    let errors = epsilons
        .iter()
        .map(|&e| validate::generator_error(&manifold, &ret, &f, &points, e, quadrature))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let path = out_path(&mut cfg, "generator.json");
    let r = ValidationReport::new("generator", params(&cfg)?, worst, 1.5, worst >= 1.5).with_details(json!({
        "epsilons": epsilons,
        "errors": errors,
        "ratios": ratios,
        "quadrature": quadrature,
    }));
    report(&path, &r)
}

fn cmd_heat(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.manifold.get_or_insert(ManifoldSpec::Catalog {
        spec: "sphere:dim=2".into(),
    });
    let manifold = manifold_of(&cfg)?;
    if manifold.exp_oracle != ExpOracle::Sphere || manifold.intrinsic_dim() != 2 {
        return Err(Error::Config {
            key: "manifold".into(),
            reason: "the heat test needs the unit 2-sphere (sphere:dim=2 or sphere-param)".into(),
        });
    }
    let walkers = *cfg.walkers.get_or_insert(50_000);
    let degree = *cfg.degree.get_or_insert(1);
    let eps = *cfg.epsilon.get_or_insert(0.02);
    let m = manifold.intrinsic_dim();
    // an explicit step count fixes the time, otherwise the time fixes the steps
    let time = match cfg.steps {
        Some(n) if cfg.time.is_none() => eps * eps * n as f64 / m as f64,
        _ => *cfg.time.get_or_insert(0.5),
    };
    cfg.time = Some(time);
    let steps = *cfg.steps.get_or_insert(validate::steps_for_time(m, time, eps));
    let wc = walk_config(&mut cfg, &manifold, eps, steps)?;
    let res = validate::heat_kernel_estimate(&manifold, &wc, walkers, degree, time, walk::thread_count())?;
    let threshold = 3.0 * res.stderr + 0.01;
    let path = out_path(&mut cfg, "heat.json");
    let r = ValidationReport::new("heat", params(&cfg)?, res.deviation(), threshold, res.deviation() <= threshold)
        .with_details(serde_json::to_value(&res).map_err(|e| Error::Io(e.to_string()))?);
    report(&path, &r)
}

fn cmd_density(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let wc = walk_config(&mut cfg, &manifold, 0.1, 100_000)?;
    let seed = wc.seed;
    let total = wc.recorded_len();
    let burn_in = |eps: f64| -> Result<usize> {
        let cover = match manifold.volume {
            Some(v) if manifold.intrinsic_dim() >= 2 => {
                validate::cover_time_steps(manifold.intrinsic_dim(), v, 0.05, eps)? / wc.record_every as u64
            }
            _ => 0,
        };
        Ok(validate::burn_in_length(total, cover))
    };

    // recorded points of the current attempt, minus its burn-in
    let mut walker = Walker::new(&manifold, wc.clone())?;
    let mut skip = burn_in(wc.epsilon)?;
    let mut seen = 1usize;
    let mut kept: Vec<ManifoldPoint> = Vec::new();
    if skip == 0 {
        kept.push(walker.current().clone());
    }
    while !walker.is_done() {
        let recorded = match walker.step()? {
            StepOutcome::Moved => {
                let i = walker.index();
                i % wc.record_every == 0 || i == wc.steps
            }
            StepOutcome::Restarted => {
                skip = burn_in(walker.epsilon())?;
                seen = 0;
                kept.clear();
                true
            }
        };
        if recorded {
            if seen >= skip {
                kept.push(walker.current().clone());
            }
            seen += 1;
        }
    }

    let binning = if manifold.is_parameterized() {
        let dim = manifold.intrinsic_dim();
        let bins = cfg.bins.get_or_insert_with(|| vec![16; dim]).clone();
        let axes = cfg.axes.get_or_insert_with(|| (0..bins.len()).collect()).clone();
        Binning::ChartGrid { chart: 0, axes, bins }
    } else {
        let n = manifold.ambient_dim();
        let bins = cfg.bins.get_or_insert_with(|| vec![8; n]).clone();
        let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
        for p in &kept {
            for (d, x) in manifold.ambient(p)?.iter().enumerate() {
                lo[d] = lo[d].min(*x);
                hi[d] = hi[d].max(*x);
            }
        }
        for d in 0..n {
            let pad = 0.05 * (hi[d] - lo[d]) + 1e-3;
            lo[d] -= pad;
            hi[d] += pad;
        }
        Binning::AmbientCells {
            lo,
            hi,
            bins,
            shell: 0.02,
            reference_samples: *cfg.samples.get_or_insert(2_000_000),
            seed,
        }
    };
    let mut acc = DensityAccumulator::new(&manifold, binning)?;
    for p in &kept {
        acc.add(p)?;
    }
    let test = acc.finish()?;
    let path = out_path(&mut cfg, "density.json");
    let csv_path = path.with_file_name("density.csv");
    output::write_density_csv(&csv_path, &test)?;
    let r = ValidationReport::new("density", params(&cfg)?, test.total_variation, 0.05, test.total_variation <= 0.05)
        .with_details(json!({
            "samples": test.samples,
            "outside": test.outside,
            "burn_in": skip,
            "chi_square": test.chi_square,
            "bins": test.observed.len(),
            "final_epsilon": walker.epsilon(),
            "restarts": walker.restarts(),
            "histogram": csv_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        }));
    report(&path, &r)
}

fn cmd_accel(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let manifold = manifold_of(&cfg)?;
    let ret = retraction_of(&mut cfg, &manifold);
    let points = *cfg.points.get_or_insert(100);
    let mut rng = RandomStream::new(*cfg.seed.get_or_insert(0), 0);
    let s = validate::acceleration_survey(&manifold, &ret, points, &mut rng)?;
    let path = out_path(&mut cfg, "accel.json");
    let r = ValidationReport::new("accel", params(&cfg)?, s.max_tangential, 1e-5, s.max_tangential <= 1e-5)
        .with_details(serde_json::to_value(&s).map_err(|e| Error::Io(e.to_string()))?);
    report(&path, &r)
}
