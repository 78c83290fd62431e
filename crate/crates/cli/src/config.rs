//! Flat `key = value` experiment files merged with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geoflow::mesh::{SurfaceKind, SurfaceSpec};
use geoflow::EnergyDensity;

/// Problems with the configuration itself; reported as usage errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

pub const KEYS: [&str; 14] = [
    "surface",
    "refinement",
    "density",
    "tau",
    "t_end",
    "newton_tol",
    "alpha0",
    "alpha_factor",
    "frame_stride",
    "out",
    "levels",
    "reference",
    "checkpoints",
    "resolution",
];

/// Raw settings by key. Later layers override earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("{origin}:{}: expected `key = value`", i + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "{origin}:{}: unknown key `{key}`",
                    i + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| ConfigError(format!("invalid value `{v}` for `{key}`: {e}"))),
        }
    }

    fn list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: FromStr + Clone,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|e| ConfigError(format!("invalid entry `{p}` in `{key}`: {e}")))
                })
                .collect(),
        }
    }
}

/// Settings of a single flow run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub surface: SurfaceSpec,
    pub density: EnergyDensity,
    pub tau: f64,
    /// Whether `tau` was given explicitly rather than defaulted.
    pub tau_given: bool,
    pub t_end: f64,
    pub newton_tol: f64,
    pub alpha0: f64,
    pub alpha_factor: f64,
    /// Write a frame every this many steps; 0 disables frames.
    pub frame_stride: usize,
    pub out: PathBuf,
}

/// Settings of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergeConfig {
    pub run: RunConfig,
    pub levels: Vec<u32>,
    pub reference: u32,
    pub checkpoints: Vec<f64>,
    pub resolution: usize,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError(format!("`{name}` must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let kind: SurfaceKind = s
            .get("surface")
            .unwrap_or("sphere")
            .parse()
            .map_err(|e: geoflow::Error| ConfigError(e.to_string()))?;
        let refinement = s.parsed("refinement", 3u32)?;
        let density = match s.get("density") {
            None => EnergyDensity::Willmore,
            Some(name) => EnergyDensity::parse(name).map_err(|e| ConfigError(e.to_string()))?,
        };
        let tau = positive("tau", s.parsed("tau", 1e-3)?)?;
        let t_end: f64 = s.parsed("t_end", 0.1)?;
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(ConfigError(format!(
                "`t_end` must be non-negative, got {t_end}"
            )));
        }
        let newton_tol = positive("newton_tol", s.parsed("newton_tol", 1e-10)?)?;
        let alpha0 = positive("alpha0", s.parsed("alpha0", 1e6)?)?;
        let alpha_factor: f64 = s.parsed("alpha_factor", 5.0)?;
        if !(alpha_factor > 1.0 && alpha_factor.is_finite()) {
            return Err(ConfigError(format!(
                "`alpha_factor` must exceed 1, got {alpha_factor}"
            )));
        }
        let out = s.get("out").map(PathBuf::from).ok_or_else(|| {
            ConfigError("no output directory given (use --out or `out =`)".into())
        })?;
        Ok(Self {
            surface: SurfaceSpec::new(kind, refinement),
            density,
            tau,
            tau_given: s.get("tau").is_some(),
            t_end,
            newton_tol,
            alpha0,
            alpha_factor,
            frame_stride: s.parsed("frame_stride", 10usize)?,
            out,
        })
    }

    /// The output directory must already exist.
    pub fn check_output_dir(&self) -> Result<()> {
        if self.out.is_dir() {
            Ok(())
        } else {
            Err(ConfigError(format!(
                "output directory {} does not exist",
                self.out.display()
            )))
        }
    }
}

impl ConvergeConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let run = RunConfig::from_settings(s)?;
        let levels: Vec<u32> = s.list("levels", &[1, 2, 3])?;
        if levels.len() < 3 {
            return Err(ConfigError(format!(
                "a convergence study needs at least 3 levels, got {}",
                levels.len()
            )));
        }
        let finest = levels.iter().copied().max().unwrap_or(0);
        let reference = s.parsed("reference", finest + 1)?;
        let checkpoints: Vec<f64> = s.list("checkpoints", &[0.025, 0.05])?;
        for &t in &checkpoints {
            positive("checkpoints", t)?;
        }
        let resolution = s.parsed("resolution", 256usize)?;
        Ok(Self {
            run,
            levels,
            reference,
            checkpoints,
            resolution,
        })
    }
}
