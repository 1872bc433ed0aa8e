//! Flat `key = value` configuration with `[section]` headers.
//!
//! The format is deliberately plain: one scalar or comma list per line,
//! `#` comments, no nesting. Files diff cleanly and any tooling can write
//! them. CLI flags override entries via `set`.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected 'key = value', got {1:?}")]
    BadLine(usize, String),
    #[error("line {0}: entry before any [section]")]
    NoSection(usize),
    #[error("[{section}] {key}: {message}")]
    BadValue {
        section: String,
        key: String,
        message: String,
    },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = Some(name.trim().to_owned());
                cfg.sections.entry(current.clone().unwrap()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine(idx + 1, raw_line.to_owned()));
            };
            let section = current.clone().ok_or(ConfigError::NoSection(idx + 1))?;
            cfg.set(&section, key.trim(), value.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_owned())
            .or_default()
            .insert(key.to_owned(), value.to_owned());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn parse_with<T, F>(&self, section: &str, key: &str, f: F) -> Result<Option<T>, ConfigError>
    where
        F: Fn(&str) -> Result<T, String>,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(text) => f(text).map(Some).map_err(|message| ConfigError::BadValue {
                section: section.to_owned(),
                key: key.to_owned(),
                message,
            }),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self
            .parse_with(section, key, |s| s.parse().map_err(|e| format!("{e}")))?
            .unwrap_or(default))
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self
            .parse_with(section, key, |s| s.parse().map_err(|e| format!("{e}")))?
            .unwrap_or(default))
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_with(section, key, |s| s.parse().map_err(|e| format!("{e}")))
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self
            .parse_with(section, key, |s| match s {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(format!("not a boolean: {other:?}")),
            })?
            .unwrap_or(default))
    }

    pub fn string_or(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_owned()
    }

    pub fn f64_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[f64],
    ) -> Result<Vec<f64>, ConfigError> {
        Ok(self
            .parse_with(section, key, parse_list::<f64>)?
            .unwrap_or_else(|| default.to_vec()))
    }

    pub fn usize_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>, ConfigError> {
        Ok(self
            .parse_with(section, key, parse_list::<usize>)?
            .unwrap_or_else(|| default.to_vec()))
    }

    pub fn bool_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[bool],
    ) -> Result<Vec<bool>, ConfigError> {
        Ok(self
            .parse_with(section, key, |s| {
                s.split(',')
                    .map(|item| match item.trim() {
                        "true" | "yes" | "1" => Ok(true),
                        "false" | "no" | "0" => Ok(false),
                        other => Err(format!("not a boolean: {other:?}")),
                    })
                    .collect()
            })?
            .unwrap_or_else(|| default.to_vec()))
    }

    /// Canonical text form, echoed into run manifests.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (section, entries) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (key, value) in entries {
                out.push_str(&format!("{key} = {value}\n"));
            }
        }
        out
    }
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|item| item.trim().parse::<T>().map_err(|e| format!("{e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    PowerVsMu,
    DataThreshold,
    ErrorConvergence,
    Tradeoff,
    MechanismCompare,
    RealData,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::PowerVsMu => "power-vs-mu",
            Scenario::DataThreshold => "data-threshold",
            Scenario::ErrorConvergence => "error-convergence",
            Scenario::Tradeoff => "tradeoff",
            Scenario::MechanismCompare => "mechanism-compare",
            Scenario::RealData => "real-data",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ConfigError> {
        Ok(match name {
            "power-vs-mu" => Scenario::PowerVsMu,
            "data-threshold" => Scenario::DataThreshold,
            "error-convergence" => Scenario::ErrorConvergence,
            "tradeoff" => Scenario::Tradeoff,
            "mechanism-compare" => Scenario::MechanismCompare,
            "real-data" => Scenario::RealData,
            other => return Err(ConfigError::UnknownScenario(other.to_owned())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    AbsDebiased,
    Lcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionPath {
    /// Stream the actual random projection.
    Streaming,
    /// Law-equivalent Cholesky sampler (no projection matrix retained).
    Sketch,
    /// Sketch when `n` is large relative to the column count.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    Jlt,
    Gaussian,
    NonPrivate,
}

impl MechanismKind {
    pub fn name(&self) -> &'static str {
        match self {
            MechanismKind::Jlt => "jlt",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::NonPrivate => "non-private",
        }
    }
}

/// Typed experiment description assembled from a `RawConfig`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub sigma: f64,
    pub mu_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    /// Scale theta0 to unit l2 norm instead of using the mu grid.
    pub normalize_signal: bool,
    pub epsilon_grid: Vec<f64>,
    pub delta: f64,
    pub r: usize,
    pub projection: ProjectionPath,
    pub mechanisms: Vec<MechanismKind>,
    pub lambda: Option<f64>,
    pub c_lambda: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
    pub q: f64,
    pub q_grid: Vec<f64>,
    pub plus_variants: Vec<bool>,
    pub family: FamilyKind,
    pub fixed_t: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub theory_mc: usize,
    pub memory_limit_bytes: u64,
    pub response_column: String,
    pub knockoff_law: String,
    pub drop_constant_columns: bool,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let scenario = Scenario::from_name(&raw.string_or("run", "scenario", "power-vs-mu"))?;
        let bad = |section: &str, key: &str, message: String| ConfigError::BadValue {
            section: section.into(),
            key: key.into(),
            message,
        };
        let family = match raw.string_or("filter", "family", "lcd").as_str() {
            "lcd" => FamilyKind::Lcd,
            "abs-debiased" | "abs" => FamilyKind::AbsDebiased,
            other => return Err(bad("filter", "family", format!("unknown family {other:?}"))),
        };
        let projection = match raw.string_or("privacy", "projection", "auto").as_str() {
            "auto" => ProjectionPath::Auto,
            "streaming" => ProjectionPath::Streaming,
            "sketch" => ProjectionPath::Sketch,
            other => {
                return Err(bad(
                    "privacy",
                    "projection",
                    format!("unknown path {other:?}"),
                ))
            }
        };
        let mechanisms = raw
            .string_or(
                "privacy",
                "mechanisms",
                if scenario == Scenario::MechanismCompare {
                    "jlt,gaussian"
                } else {
                    "jlt"
                },
            )
            .split(',')
            .map(|m| match m.trim() {
                "jlt" => Ok(MechanismKind::Jlt),
                "gaussian" => Ok(MechanismKind::Gaussian),
                "none" | "non-private" => Ok(MechanismKind::NonPrivate),
                other => Err(bad(
                    "privacy",
                    "mechanisms",
                    format!("unknown mechanism {other:?}"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let cfg = ExperimentConfig {
            scenario,
            n: raw.usize_or("model", "n", 2000)?,
            p: raw.usize_or("model", "p", 30)?,
            s0: raw.usize_or("model", "s0", 8)?,
            sigma: raw.f64_or("model", "sigma", 1.0)?,
            mu_grid: raw.f64_list_or("model", "mu", &[0.2])?,
            n_grid: raw.usize_list_or("model", "n_grid", &[])?,
            normalize_signal: raw.bool_or("model", "normalize", false)?,
            epsilon_grid: raw.f64_list_or("privacy", "epsilon", &[1.0])?,
            delta: raw.f64_or("privacy", "delta", 0.01)?,
            r: raw.usize_or("privacy", "r", 500)?,
            projection,
            mechanisms,
            lambda: raw.f64_opt("solver", "lambda")?,
            c_lambda: raw.f64_or("solver", "c_lambda", 1.0)?,
            solver_tol: raw.f64_or("solver", "tol", 1e-11)?,
            max_iters: raw.usize_or("solver", "max_iters", 50_000)?,
            q: raw.f64_or("filter", "q", 0.2)?,
            q_grid: raw.f64_list_or("filter", "q_grid", &[0.05, 0.1, 0.15, 0.2, 0.3, 0.4])?,
            plus_variants: raw.bool_list_or("filter", "plus", &[true])?,
            family,
            fixed_t: raw.f64_opt("filter", "fixed_t")?,
            reps: raw.usize_or("run", "reps", 50)?,
            seed: raw.usize_or("run", "seed", 1)? as u64,
            theory_mc: raw.usize_or("run", "theory_mc", 200_000)?,
            memory_limit_bytes: raw.usize_or("run", "memory_limit_mb", 3500)? as u64 * 1024 * 1024,
            response_column: raw.string_or("model", "response", "y"),
            knockoff_law: raw.string_or("model", "knockoff_law", "rademacher"),
            drop_constant_columns: raw.bool_or("model", "drop_constant_columns", true)?,
        };
        if cfg.reps == 0 {
            return Err(bad("run", "reps", "repetitions must be at least 1".into()));
        }
        if cfg.mu_grid.is_empty() || cfg.epsilon_grid.is_empty() {
            return Err(bad("model", "mu", "grids must be non-empty".into()));
        }
        if cfg.plus_variants.is_empty() {
            return Err(bad(
                "filter",
                "plus",
                "need at least one threshold variant".into(),
            ));
        }
        Ok(cfg)
    }
}
