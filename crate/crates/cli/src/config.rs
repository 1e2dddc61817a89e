//! Flat `key = value` experiment configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Keys are
//! case-insensitive and `-`/`_` are interchangeable. Command-line flags are
//! applied on top of the file and win.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use catprobe_core::bath::{OhmicBathSpec, DEFAULT_DIM_CAP};
use catprobe_core::ensemble::ScenarioKind;
use catprobe_core::field::{default_dt, default_time_cap, slowest_rate};
use serde_json::Value;

/// Largest accepted trajectory or sample count.
pub const MAX_SAMPLES: u64 = 100_000_000;
/// Largest accepted moment order.
pub const MAX_KMAX: u64 = 16;
/// Default output directory.
pub const DEFAULT_OUT: &str = "catprobe-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    FluctuatingField,
    FiniteBath,
    Counterexample,
    Synthetic,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::FluctuatingField, Family::FiniteBath, Family::Counterexample, Family::Synthetic];

    pub fn name(self) -> &'static str {
        match self {
            Family::FluctuatingField => "fluctuating-field",
            Family::FiniteBath => "finite-bath",
            Family::Counterexample => "counterexample",
            Family::Synthetic => "synthetic",
        }
    }

    pub fn from_name(s: &str) -> Option<Family> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Family::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Model and numerics keys accepted for this family, in echo order.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Family::FluctuatingField => &[
                "delta",
                "gamma",
                "dt",
                "trajectories",
                "kmax",
                "seed",
                "initial",
                "record_stride",
                "n_steps",
                "window",
                "t_cap",
            ],
            Family::FiniteBath => &[
                "alpha",
                "omega_c",
                "n_modes",
                "fock_cutoff",
                "beta",
                "delta",
                "epsilon",
                "dim_cap",
                "t_grid",
                "kmax",
                "t_prep",
                "t_max",
                "asym_samples",
            ],
            Family::Counterexample => &["overlap", "nu"],
            Family::Synthetic => &["kind", "n", "seed", "kmax"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: String, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub origin: Option<Origin>,
    pub message: String,
}

impl ConfigError {
    fn new(field: Option<&str>, origin: Option<Origin>, message: impl Into<String>) -> Self {
        ConfigError { field: field.map(str::to_string), origin, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(o) = &self.origin {
            write!(f, "{o}: ")?;
        }
        if let Some(k) = &self.field {
            write!(f, "field '{k}': ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct RawEntry {
    value: String,
    origin: Origin,
}

/// Unvalidated key/value pairs with their origin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, RawEntry>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl RawConfig {
    pub fn parse_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_string(), line: i + 1 };
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::new(None, Some(origin), "expected 'key = value'"));
            };
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(ConfigError::new(None, Some(origin), "empty key"));
            }
            if let Some(prev) = cfg.entries.get(&key) {
                return Err(ConfigError::new(
                    Some(&key),
                    Some(origin),
                    format!("duplicate key (first set at {})", prev.origin),
                ));
            }
            cfg.entries.insert(key, RawEntry { value: v.trim().to_string(), origin });
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::CliError::Io { path: path.to_path_buf(), source: e })?;
        Ok(RawConfig::parse_str(&text, &path.display().to_string())?)
    }

    /// Sets a key from a command-line flag, replacing any file value.
    pub fn set_flag(&mut self, key: &str, value: &str) {
        self.entries
            .insert(normalize_key(key), RawEntry { value: value.trim().to_string(), origin: Origin::Flag });
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    /// The family named by the `experiment` key, if any.
    pub fn experiment(&self) -> Result<Option<Family>, ConfigError> {
        match self.entries.get("experiment") {
            None => Ok(None),
            Some(e) => Family::from_name(&e.value).map(Some).ok_or_else(|| {
                ConfigError::new(
                    Some("experiment"),
                    Some(e.origin.clone()),
                    format!(
                        "unknown experiment '{}' (expected one of: fluctuating-field, finite-bath, counterexample, synthetic)",
                        e.value
                    ),
                )
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Left,
    Right,
    Plus,
    Minus,
}

impl InitialState {
    pub fn name(self) -> &'static str {
        match self {
            InitialState::Left => "L",
            InitialState::Right => "R",
            InitialState::Plus => "plus",
            InitialState::Minus => "minus",
        }
    }

    pub fn state(self) -> catprobe_core::qstate::TwoLevelState {
        use catprobe_core::qstate::TwoLevelState;
        match self {
            InitialState::Left => TwoLevelState::left(),
            InitialState::Right => TwoLevelState::right(),
            InitialState::Plus => TwoLevelState::plus(),
            InitialState::Minus => TwoLevelState::minus(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldHorizon {
    Fixed { n_steps: u64 },
    Stationary { window: f64, t_cap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub delta: f64,
    pub gamma: f64,
    pub dt: f64,
    pub trajectories: u64,
    pub kmax: usize,
    pub seed: u64,
    pub initial: InitialState,
    pub record_stride: u64,
    pub horizon: FieldHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathParams {
    pub spec: OhmicBathSpec,
    pub delta: f64,
    pub epsilon: f64,
    pub t_grid: Vec<f64>,
    pub kmax: usize,
    pub t_prep: f64,
    pub t_max: f64,
    pub asym_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterParams {
    pub overlap: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub kind: ScenarioKind,
    pub n: u64,
    pub seed: u64,
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Field(FieldParams),
    Bath(BathParams),
    Counterexample(CounterParams),
    Synthetic(SyntheticParams),
}

/// A validated configuration with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub params: Params,
    pub out: PathBuf,
    /// Resolved model and numerics parameters in documented order.
    pub echo: Vec<(String, Value)>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig, family: Family) -> Result<Self, ConfigError> {
        if let Some(named) = raw.experiment()? {
            if named != family {
                let origin = raw.entries.get("experiment").map(|e| e.origin.clone());
                return Err(ConfigError::new(
                    Some("experiment"),
                    origin,
                    format!("file is for '{named}' but '{family}' was requested"),
                ));
            }
        }
        let allowed: BTreeSet<&str> = family.keys().iter().copied().chain(["experiment", "out"]).collect();
        let mut unknown: Vec<(&String, &RawEntry)> =
            raw.entries.iter().filter(|(k, _)| !allowed.contains(k.as_str())).collect();
        unknown.sort_by_key(|(_, e)| match &e.origin {
            Origin::File { line, .. } => *line,
            Origin::Flag => usize::MAX,
        });
        if let Some((k, e)) = unknown.first() {
            return Err(ConfigError::new(
                Some(k),
                Some(e.origin.clone()),
                format!("unknown key for {family} (accepted: {})", family.keys().join(", ")),
            ));
        }

        let mut r = Reader { raw, echo: Vec::new() };
        let params = match family {
            Family::FluctuatingField => Params::Field(read_field(&mut r)?),
            Family::FiniteBath => Params::Bath(read_bath(&mut r)?),
            Family::Counterexample => Params::Counterexample(read_counter(&mut r)?),
            Family::Synthetic => Params::Synthetic(read_synthetic(&mut r)?),
        };
        let out = PathBuf::from(raw.get("out").unwrap_or(DEFAULT_OUT));
        if out.as_os_str().is_empty() {
            return Err(r.err("out", "must not be empty"));
        }
        Ok(ExperimentConfig { family, params, out, echo: r.echo })
    }

    /// The parameters as a JSON object in echo order.
    pub fn parameters_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.echo {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }

    /// `key = value` lines, the normalized form of a config file.
    pub fn normalized_text(&self) -> String {
        let mut s = format!("experiment = {}\n", self.family);
        for (k, v) in &self.echo {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("out = {}\n", self.out.display()));
        s
    }
}

struct Reader<'a> {
    raw: &'a RawConfig,
    echo: Vec<(String, Value)>,
}

impl Reader<'_> {
    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        let origin = self.raw.entries.get(key).map(|e| e.origin.clone());
        ConfigError::new(Some(key), origin, msg)
    }

    fn record(&mut self, key: &str, v: impl Into<Value>) {
        self.echo.push((key.to_string(), v.into()));
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(s) = self.raw.get(key) else { return Ok(None) };
        let x: f64 = s.parse().map_err(|_| self.err(key, format!("expected a number, got '{s}'")))?;
        if !x.is_finite() {
            return Err(self.err(key, format!("must be finite, got '{s}'")));
        }
        Ok(Some(x))
    }

    fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        let Some(s) = self.raw.get(key) else { return Ok(None) };
        if let Ok(n) = s.parse::<u64>() {
            return Ok(Some(n));
        }
        match s.parse::<f64>() {
            Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 9.007_199_254_740_992e15 => Ok(Some(x as u64)),
            _ => Err(self.err(key, format!("expected a non-negative integer, got '{s}'"))),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.f64_opt(key)?.unwrap_or(default);
        self.record(key, x);
        Ok(x)
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        let x = self.u64_opt(key)?.unwrap_or(default);
        self.record(key, x);
        Ok(x)
    }

    fn ensure(&self, ok: bool, key: &str, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(self.err(key, msg()))
        }
    }

    fn non_negative(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.f64_or(key, default)?;
        self.ensure(x >= 0.0, key, || format!("must be >= 0 (got {x})"))?;
        Ok(x)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.f64_or(key, default)?;
        self.ensure(x > 0.0, key, || format!("must be > 0 (got {x})"))?;
        Ok(x)
    }

    fn count(&mut self, key: &str, default: u64, min: u64, max: u64) -> Result<u64, ConfigError> {
        let n = self.u64_or(key, default)?;
        self.ensure((min..=max).contains(&n), key, || format!("must be in [{min}, {max}] (got {n})"))?;
        Ok(n)
    }
}

fn read_field(r: &mut Reader) -> Result<FieldParams, ConfigError> {
    let delta = r.non_negative("delta", 1.0)?;
    let gamma = r.non_negative("gamma", 1.0)?;
    let dt = r.positive("dt", default_dt(delta, gamma))?;
    let trajectories = r.count("trajectories", 10_000, 2, MAX_SAMPLES)?;
    let kmax = r.count("kmax", 4, 1, MAX_KMAX)? as usize;
    let seed = r.u64_or("seed", 0)?;
    let initial = match r.raw.get("initial").unwrap_or("L").to_ascii_lowercase().as_str() {
        "l" | "left" => InitialState::Left,
        "r" | "right" => InitialState::Right,
        "plus" | "+" => InitialState::Plus,
        "minus" | "-" => InitialState::Minus,
        other => return Err(r.err("initial", format!("expected one of L, R, plus, minus (got '{other}')"))),
    };
    r.record("initial", initial.name());
    let record_stride = r.count("record_stride", 10, 1, u64::MAX)?;

    let rate = slowest_rate(delta, gamma);
    let n_steps = r.u64_opt("n_steps")?;
    let horizon = match n_steps {
        Some(n) => {
            r.ensure(n >= 1, "n_steps", || "must be >= 1".into())?;
            for k in ["window", "t_cap"] {
                r.ensure(r.raw.get(k).is_none(), k, || "cannot be combined with n_steps".into())?;
            }
            r.record("n_steps", n);
            FieldHorizon::Fixed { n_steps: n }
        }
        None => {
            let window = r.positive("window", 10.0 / rate)?;
            let t_cap = r.positive("t_cap", default_time_cap(delta, gamma))?;
            r.ensure(window >= dt, "window", || format!("must be >= dt = {dt} (got {window})"))?;
            r.ensure(t_cap >= window, "t_cap", || format!("must be >= window = {window} (got {t_cap})"))?;
            let steps = (t_cap / dt).ceil();
            r.ensure(steps < 1e15, "t_cap", || format!("needs {steps:e} steps at dt = {dt}"))?;
            FieldHorizon::Stationary { window, t_cap }
        }
    };
    Ok(FieldParams { delta, gamma, dt, trajectories, kmax, seed, initial, record_stride, horizon })
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_t_grid(s: &str) -> Result<Vec<f64>, String> {
    let parse = |x: &str| -> Result<f64, String> {
        let v: f64 = x.trim().parse().map_err(|_| format!("expected a number, got '{}'", x.trim()))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("times must be finite and >= 0 (got {v})"));
        }
        Ok(v)
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err("expected 'start:stop:count'".into());
        }
        let (a, b) = (parse(parts[0])?, parse(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| format!("bad count '{}'", parts[2].trim()))?;
        if n == 0 || n > 1_000_000 {
            return Err(format!("count must be in [1, 1000000] (got {n})"));
        }
        if b < a {
            return Err(format!("stop {b} is before start {a}"));
        }
        if n == 1 {
            vec![a]
        } else {
            (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
        }
    } else {
        s.split(',').map(parse).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err("empty time grid".into());
    }
    Ok(grid)
}

fn read_bath(r: &mut Reader) -> Result<BathParams, ConfigError> {
    let alpha = r.non_negative("alpha", 0.5)?;
    let omega_default = match r.f64_opt("delta")? {
        Some(d) if d > 0.0 => 5.0 * d,
        None => 5.0,
        _ => 5.0,
    };
    let omega_c = r.positive("omega_c", omega_default)?;
    let n_modes = r.count("n_modes", 2, 1, 64)? as usize;
    let fock_cutoff = r.count("fock_cutoff", 1, 1, 1 << 20)? as usize;
    let beta = r.positive("beta", 1.0)?;
    let delta = r.non_negative("delta", 1.0)?;
    let epsilon = r.f64_or("epsilon", 0.0)?;
    let dim_cap = r.count("dim_cap", DEFAULT_DIM_CAP as u64, 2, u32::MAX as u64)? as usize;

    let spec = OhmicBathSpec { alpha, omega_c, n_modes, fock_cutoff, beta, dim_cap };
    if let Err(e) = spec.validate() {
        let msg = e.to_string();
        let msg = msg.strip_prefix("configuration error: ").unwrap_or(&msg).to_string();
        let origin = ["fock_cutoff", "n_modes", "dim_cap"]
            .iter()
            .find_map(|k| r.raw.entries.get(*k))
            .map(|e| e.origin.clone());
        return Err(ConfigError::new(Some("n_modes, fock_cutoff"), origin, msg));
    }

    let grid_text: String = r.raw.get("t_grid").unwrap_or("0:20:201").split_whitespace().collect();
    let t_grid = parse_t_grid(&grid_text).map_err(|m| r.err("t_grid", m))?;
    r.record("t_grid", grid_text);
    let kmax = r.count("kmax", 4, 1, MAX_KMAX)? as usize;
    let t_prep = r.non_negative("t_prep", 1.0)?;
    let t_max = r.positive("t_max", 100.0)?;
    let asym_samples = r.count("asym_samples", 64, 1, 1_000_000)? as usize;
    Ok(BathParams { spec, delta, epsilon, t_grid, kmax, t_prep, t_max, asym_samples })
}

fn read_counter(r: &mut Reader) -> Result<CounterParams, ConfigError> {
    let overlap = r.f64_or("overlap", 0.0)?;
    r.ensure((-1.0..=1.0).contains(&overlap), "overlap", || format!("must be in [-1, 1] (got {overlap})"))?;
    let nu = r.f64_or("nu", std::f64::consts::FRAC_1_SQRT_2)?;
    r.ensure((0.0..=1.0).contains(&nu), "nu", || format!("must be in [0, 1] (got {nu})"))?;
    Ok(CounterParams { overlap, nu })
}

fn read_synthetic(r: &mut Reader) -> Result<SyntheticParams, ConfigError> {
    let Some(text) = r.raw.get("kind") else {
        return Err(r.err("kind", "required (collapsed, delocalized or uniform)"));
    };
    let kind: ScenarioKind = text
        .to_ascii_lowercase()
        .parse()
        .map_err(|_| r.err("kind", format!("expected collapsed, delocalized or uniform (got '{text}')")))?;
    r.record("kind", kind.to_string());
    let n = r.count("n", 1000, 1, MAX_SAMPLES)?;
    let seed = r.u64_or("seed", 0)?;
    let kmax = r.count("kmax", 4, 1, MAX_KMAX)? as usize;
    Ok(SyntheticParams { kind, n, seed, kmax })
}
