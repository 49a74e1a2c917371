use std::fs;
use std::path::{Path, PathBuf};

use khessian::stability::{ZRule, DEFAULT_R_LIST};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Solve,
    Identities,
    Sbt,
    Sweep,
    Bubbling,
    Probes,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Identities => "identities",
            Self::Sbt => "sbt",
            Self::Sweep => "sweep",
            Self::Bubbling => "bubbling",
            Self::Probes => "probes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Area-preserving ellipses with semi-axes `1 + ε` and `1/(1 + ε)`.
    Ellipse,
    /// Volume-preserving spheroids with equatorial semi-axis `1 + ε`.
    Spheroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative residual for the integral identities.
    pub identity: f64,
    /// Same, on balls.
    pub exact: f64,
    /// Allowed negativity of `L[P]` on grid solutions.
    pub positivity: f64,
    /// Pointwise slack in the curvature chain.
    pub chain: f64,
    /// Smallest accepted log-log slope in the Serrin sweep.
    pub min_slope: f64,
    /// Largest accepted leave-one-out slope change.
    pub loo: f64,
    /// Largest accepted max/min spread of fitted constants.
    pub spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity: 1e-6, exact: 1e-10, positivity: 1e-6, chain: 1e-12, min_slope: 0.9, loo: 0.1, spread: 10.0 }
    }
}

fn default_h() -> f64 {
    1.0 / 64.0
}

fn default_m() -> usize {
    1024
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    /// Domain files, resolved against the config file's directory.
    #[serde(default)]
    pub domains: Vec<PathBuf>,
    /// Built-in family for the sweeps, used instead of (or after) `domains`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    pub k: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Boundary samples.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_solution: bool,
    #[serde(default)]
    pub seed: u64,
    /// Jitter the stratified bubbling samples using `seed`.
    #[serde(default)]
    pub jitter: bool,
    #[serde(default)]
    pub z_rule: ZRule,
    /// Solve the torsion problem in the SBT sweep to check the gradient bound.
    #[serde(default)]
    pub gradient_bound: bool,
    #[serde(default = "default_r_list")]
    pub r_list: Vec<f64>,
}

fn default_r_list() -> Vec<f64> {
    DEFAULT_R_LIST.to_vec()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn new(command: CommandKind, k: usize) -> Self {
        Self {
            command,
            domains: Vec::new(),
            family: None,
            k,
            h: default_h(),
            m: default_m(),
            tolerances: Tolerances::default(),
            output_dir: default_out(),
            emit_solution: false,
            seed: 0,
            jitter: false,
            z_rule: ZRule::default(),
            gradient_bound: false,
            r_list: default_r_list(),
        }
    }

    /// Checks everything that does not need the domain files parsed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("grid spacing h = {} must be positive", self.h));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.m < 8 {
            return bad(format!("sample count m = {} must be at least 8", self.m));
        }
        for p in &self.domains {
            if !p.is_file() {
                return bad(format!("domain file {} does not exist", p.display()));
            }
        }
        let sweep = matches!(self.command, CommandKind::Sweep | CommandKind::Sbt);
        if sweep {
            if self.domains.is_empty() && self.family.is_none() {
                return bad(format!("{} needs domain files or a family", self.command.name()));
            }
        } else {
            if self.family.is_some() {
                return bad(format!("{} does not take a family", self.command.name()));
            }
            if self.domains.len() != 1 {
                return bad(format!("{} needs exactly one domain file (got {})", self.command.name(), self.domains.len()));
            }
        }
        if let Some(f) = &self.family {
            if f.eps.is_empty() || f.eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                return bad("family eps values must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

/// Reads a strict config file. Relative domain paths and the output directory
/// are resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.into(), source: e })?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), source: e })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in &mut cfg.domains {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    Ok(cfg)
}
