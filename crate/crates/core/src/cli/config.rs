//! Run configuration: a key-value file plus command-line overrides.
//!
//! ```text
//! # comment
//! manifold = torus:R=1.1
//! retraction = pret
//! eps = 0.5
//! steps = 100000
//!
//! manifold = implicit { dim_ambient = 3, f = ["(x^2 (1 - x^2) - y^2)^2 + z^2 - 0.01"] }
//! manifold = parametric { dim = 2, phi = ["cos(x)", "sin(x)", "y"], periodic = [2pi, 2pi] }
//! ```
//!
//! A bare `implicit { ... }` or `parametric { ... }` line is shorthand for
//! `manifold = ...`. Numbers may be constant expressions (`2pi`, `1/3`).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr;
use crate::geometry::{
    catalog, AmbientPoint, Atlas, Chart, ChartDomain, ChartPoint, ExprMap, Manifold, ManifoldPoint,
};
use crate::retraction::{project_to_manifold, ProjectionSettings, RetractionKind};

/// A parsed right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Unquoted text, trimmed.
    Scalar(String),
    Str(String),
    List(Vec<Value>),
    Block(String, Vec<(String, Value)>),
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&self) -> usize {
        1 + self.src[..self.pos].iter().filter(|&&b| b == b'\n').count()
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        config_err(&format!("line {}", self.line()), reason)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    /// Skips blanks and comments; newlines too when `newlines` is set.
    fn skip(&mut self, newlines: bool) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'\n' if newlines => self.pos += 1,
                b'#' => {
                    while !matches!(self.peek(), None | Some(b'\n')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> Result<String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'-') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a key"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    /// `nested` values stop at `,`, `]` and `}`; top-level ones at the end of the line.
    fn value(&mut self, nested: bool) -> Result<Value> {
        self.skip(nested);
        match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                let mut s = Vec::new();
                loop {
                    match self.peek() {
                        None | Some(b'\n') => return Err(self.err("unterminated string")),
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b'\\') => {
                            self.pos += 1;
                            match self.peek() {
                                Some(c @ (b'"' | b'\\')) => s.push(c),
                                _ => return Err(self.err("only \\\" and \\\\ escapes are allowed")),
                            }
                            self.pos += 1;
                        }
                        Some(c) => {
                            s.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Value::Str(String::from_utf8_lossy(&s).into_owned()))
            }
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip(true);
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    items.push(self.value(true)?);
                    self.skip(true);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {}
                        _ => return Err(self.err("expected `,` or `]` in list")),
                    }
                }
            }
            _ => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    let stop = c == b'\n' || c == b'#' || c == b'{' || (nested && matches!(c, b',' | b']' | b'}'));
                    if stop {
                        break;
                    }
                    self.pos += 1;
                }
                let text = String::from_utf8_lossy(&self.src[start..self.pos]).trim().to_string();
                if self.peek() == Some(b'{') {
                    if text.is_empty() || !text.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_') {
                        return Err(self.err("a block needs a name"));
                    }
                    self.pos += 1;
                    return Ok(Value::Block(text, self.entries(Some(b'}'))?));
                }
                if text.is_empty() {
                    return Err(self.err("missing value"));
                }
                Ok(Value::Scalar(text))
            }
        }
    }

    /// `key = value` entries up to `close` (or the end of input).
    fn entries(&mut self, close: Option<u8>) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        loop {
            self.skip(true);
            match (self.peek(), close) {
                (None, None) => return Ok(out),
                (None, Some(c)) => return Err(self.err(format!("missing `{}`", c as char))),
                (Some(c), Some(cl)) if c == cl => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => {}
            }
            let key = self.ident()?;
            self.skip(false);
            if close.is_none() && self.peek() == Some(b'{') {
                // bare manifold block
                self.pos += 1;
                let body = self.entries(Some(b'}'))?;
                out.push(("manifold".to_string(), Value::Block(key, body)));
            } else {
                self.expect(b'=')?;
                let v = self.value(close.is_some())?;
                out.push((key, v));
            }
            self.skip(false);
            match (self.peek(), close) {
                (Some(b','), Some(_)) => self.pos += 1,
                (Some(b'\n') | None, _) => {}
                (Some(c), Some(cl)) if c == cl => {}
                _ => return Err(self.err("expected end of entry")),
            }
        }
    }
}

/// Parses configuration text into its top-level entries, in order.
pub fn parse_config(text: &str) -> Result<Vec<(String, Value)>> {
    Reader {
        src: text.as_bytes(),
        pos: 0,
    }
    .entries(None)
}

/// Where the manifold comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ManifoldSpec {
    Catalog { spec: String },
    Implicit { dim_ambient: usize, f: Vec<String> },
    Parametric { dim: usize, phi: Vec<String>, periodic: Vec<f64> },
}

/// Everything a command may need. Unset fields take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retraction: Option<RetractionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

pub fn number(key: &str, text: &str) -> Result<f64> {
    expr::parse(text, 0)
        .and_then(|a| a.eval(&[]))
        .map_err(|e| config_err(key, format!("`{text}` is not a number ({e})")))
}

pub fn integer(key: &str, text: &str) -> Result<u64> {
    if let Ok(n) = text.trim().parse::<u64>() {
        return Ok(n);
    }
    let v = number(key, text)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63) {
        Ok(v as u64)
    } else {
        Err(config_err(key, format!("`{text}` is not a non-negative integer")))
    }
}

/// Comma-separated list, as given on the command line.
pub fn split_list(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn scalar_text<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    match v {
        Value::Scalar(s) | Value::Str(s) => Ok(s),
        _ => Err(config_err(key, "expected a single value")),
    }
}

fn numbers(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::List(items) => items.iter().map(|i| number(key, scalar_text(key, i)?)).collect(),
        other => split_list(scalar_text(key, other)?).into_iter().map(|s| number(key, s)).collect(),
    }
}

fn integers(key: &str, v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::List(items) => items
            .iter()
            .map(|i| integer(key, scalar_text(key, i)?).map(|n| n as usize))
            .collect(),
        other => split_list(scalar_text(key, other)?)
            .into_iter()
            .map(|s| integer(key, s).map(|n| n as usize))
            .collect(),
    }
}

fn strings(key: &str, v: &Value) -> Result<Vec<String>> {
    match v {
        Value::List(items) => items.iter().map(|i| scalar_text(key, i).map(str::to_string)).collect(),
        other => Ok(vec![scalar_text(key, other)?.to_string()]),
    }
}

fn manifold_block(name: &str, body: &[(String, Value)]) -> Result<ManifoldSpec> {
    let key = |k: &str| format!("manifold.{k}");
    let find = |k: &str| body.iter().find(|(bk, _)| bk == k).map(|(_, v)| v);
    let allowed: &[&str] = match name {
        "implicit" => &["dim_ambient", "f"],
        "parametric" => &["dim", "phi", "periodic"],
        _ => return Err(config_err("manifold", format!("unknown block `{name}` (implicit or parametric)"))),
    };
    if let Some((k, _)) = body.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(config_err(&key(k), "unknown key"));
    }
    let need = |k: &str| find(k).ok_or_else(|| config_err(&key(k), "missing"));
    let dim_of = |k: &str| -> Result<usize> {
        let n = integer(&key(k), scalar_text(&key(k), need(k)?)?)? as usize;
        if n == 0 {
            return Err(config_err(&key(k), "must be positive"));
        }
        Ok(n)
    };
    match name {
        "implicit" => Ok(ManifoldSpec::Implicit {
            dim_ambient: dim_of("dim_ambient")?,
            f: strings(&key("f"), need("f")?)?,
        }),
        _ => {
            let dim = dim_of("dim")?;
            let periodic = numbers(&key("periodic"), need("periodic")?)?;
            if periodic.len() != dim || periodic.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                return Err(config_err(&key("periodic"), format!("needs {dim} positive periods")));
            }
            Ok(ManifoldSpec::Parametric {
                dim,
                phi: strings(&key("phi"), need("phi")?)?,
                periodic,
            })
        }
    }
}

impl RunConfig {
    /// Reads configuration entries; unknown keys are rejected.
    pub fn from_entries(entries: &[(String, Value)]) -> Result<Self> {
        let mut c = RunConfig::default();
        for (key, v) in entries {
            let k = key.as_str();
            let uint = || -> Result<usize> { Ok(integer(k, scalar_text(k, v)?)? as usize) };
            let float = || -> Result<f64> { number(k, scalar_text(k, v)?) };
            match k {
                "manifold" => {
                    c.manifold = Some(match v {
                        Value::Block(name, body) => manifold_block(name, body)?,
                        other => ManifoldSpec::Catalog {
                            spec: scalar_text(k, other)?.to_string(),
                        },
                    })
                }
                "retraction" => c.retraction = Some(parse_retraction(scalar_text(k, v)?)?),
                "eps" | "epsilon" => c.epsilon = Some(float()?),
                "steps" => c.steps = Some(uint()?),
                "seed" => c.seed = Some(integer(k, scalar_text(k, v)?)?),
                "record_every" => c.record_every = Some(uint()?),
                "walkers" => c.walkers = Some(uint()?),
                "out" => c.out = Some(scalar_text(k, v)?.to_string()),
                "delta" => c.delta = Some(float()?),
                "size" => c.size = Some(float()?),
                "degree" => c.degree = Some(uint()?),
                "time" => c.time = Some(float()?),
                "trials" => c.trials = Some(uint()?),
                "points" => c.points = Some(uint()?),
                "samples" => c.samples = Some(uint()?),
                "bins" => c.bins = Some(integers(k, v)?),
                "axes" => c.axes = Some(integers(k, v)?),
                "observable" => c.observable = Some(scalar_text(k, v)?.to_string()),
                "start" => c.start = Some(numbers(k, v)?),
                _ => return Err(config_err(k, "unknown key")),
            }
        }
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_entries(&parse_config(text)?)
    }

    /// Fields set in `other` replace ours.
    pub fn overlay(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            manifold, retraction, epsilon, steps, seed, record_every, walkers, out, delta, size, degree,
            time, trials, points, samples, bins, axes, observable, start
        );
    }

    /// Checks every field that is set.
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(config_err("eps", "epsilon must be positive"));
            }
        }
        if self.record_every == Some(0) {
            return Err(config_err("record_every", "must be at least 1"));
        }
        for (k, v) in [("walkers", self.walkers), ("trials", self.trials), ("points", self.points)] {
            if v == Some(0) {
                return Err(config_err(k, "must be at least 1"));
            }
        }
        if let Some(s) = self.samples {
            if s < 2 {
                return Err(config_err("samples", "must be at least 2"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(config_err("delta", "must lie in (0, 1)"));
            }
        }
        if let Some(s) = self.size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(config_err("size", "must be positive"));
            }
        }
        if let Some(t) = self.time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(config_err("time", "must be non-negative"));
            }
        }
        if let Some(b) = &self.bins {
            if b.is_empty() || b.contains(&0) {
                return Err(config_err("bins", "bin counts must be positive"));
            }
        }
        if let (Some(b), Some(a)) = (&self.bins, &self.axes) {
            if a.len() != b.len() {
                return Err(config_err("axes", "needs one entry per bin count"));
            }
        }
        if let Some(s) = &self.start {
            if s.iter().any(|x| !x.is_finite()) {
                return Err(config_err("start", "coordinates must be finite"));
            }
        }
        Ok(())
    }
}

pub fn parse_retraction(text: &str) -> Result<RetractionKind> {
    RetractionKind::from_name(text.trim())
        .ok_or_else(|| config_err("retraction", format!("`{text}` is not one of pret, piret, exact, ode")))
}

/// A point on an implicit manifold near the origin-scale box, found by
/// projecting fixed guesses.
fn find_point(manifold: &Manifold, n: usize) -> Option<Vec<f64>> {
    let settings = ProjectionSettings::default();
    for r in [1.0, 0.5, 2.0, 0.2, 4.0] {
        for axis in 0..n {
            let guess: Vec<f64> = (0..n)
                .map(|i| if i == axis { r } else { 0.0123 * (i + 1) as f64 })
                .collect();
            if let Ok(p) = project_to_manifold(manifold, &AmbientPoint::new(guess), &settings) {
                if p.coords.iter().all(|c| c.is_finite()) {
                    return Some(p.coords);
                }
            }
        }
    }
    None
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<Manifold> {
        match self {
            ManifoldSpec::Catalog { spec } => catalog::lookup(spec),
            ManifoldSpec::Implicit { dim_ambient, f } => {
                if f.is_empty() || f.len() >= *dim_ambient {
                    return Err(config_err("manifold.f", "needs between 1 and dim_ambient − 1 equations"));
                }
                let map = ExprMap::parse(f, *dim_ambient)?;
                let probe = Manifold::implicit("implicit", Arc::new(map.clone()), vec![0.0; *dim_ambient]);
                let base = find_point(&probe, *dim_ambient)
                    .ok_or_else(|| config_err("manifold", "could not find a point on the zero set"))?;
                Ok(Manifold::implicit("implicit", Arc::new(map), base))
            }
            ManifoldSpec::Parametric { dim, phi, periodic } => {
                if phi.len() < *dim {
                    return Err(config_err("manifold.phi", "needs at least dim components"));
                }
                let map = ExprMap::parse(phi, *dim)?;
                let chart = Chart::new(Arc::new(map), ChartDomain::periodic(periodic));
                let atlas = Atlas {
                    charts: vec![chart],
                    dim: *dim,
                    ambient_dim: phi.len(),
                };
                Ok(Manifold::parameterized("parametric", atlas, ChartPoint::new(0, vec![0.0; *dim])))
            }
        }
    }
}

/// Start point from native coordinates: chart-0 coordinates for
/// parameterized manifolds, ambient coordinates (projected onto `M`) for
/// implicit ones.
pub fn start_point(manifold: &Manifold, coords: &[f64]) -> Result<ManifoldPoint> {
    if manifold.is_parameterized() {
        let chart = manifold.chart(0)?;
        if coords.len() != chart.domain.dim() {
            return Err(config_err("start", format!("needs {} chart coordinates", chart.domain.dim())));
        }
        let mut c = coords.to_vec();
        chart.domain.wrap(&mut c);
        if !chart.domain.contains(&c) {
            return Err(config_err("start", "outside the chart domain"));
        }
        Ok(ManifoldPoint::Chart(ChartPoint::new(0, c)))
    } else {
        if coords.len() != manifold.ambient_dim() {
            return Err(config_err("start", format!("needs {} ambient coordinates", manifold.ambient_dim())));
        }
        let p = project_to_manifold(manifold, &AmbientPoint::new(coords.to_vec()), &ProjectionSettings::default())
            .map_err(|e| config_err("start", format!("cannot project onto the manifold ({e})")))?;
        Ok(ManifoldPoint::Ambient(p))
    }
}
