//! Experiment configuration: a TOML document with reference defaults, plus
//! `key=value` overrides from the command line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use koopman_prior::experiments::{ErrorNorm, NMOptions};
use koopman_prior::{PolynomialTemplate, RolloutMode, System, TemplateTerm, DEFAULT_SUBSTEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Duffing,
    Vdp,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rollout {
    LiftOnce,
    Relift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    State,
    Lifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialTerm {
    pub component: usize,
    pub exponents: Vec<u32>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub weights: Vec<f64>,
}

/// Generic system: each term's coefficient is `constant + Σ weights[k]·θ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialConfig {
    pub dim: usize,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub terms: Vec<PolynomialTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmConfig {
    /// Box for the random initial guess; `[-10, 10]` per parameter when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_box: Option<Vec<[f64; 2]>>,
    /// Box the true parameters are drawn from; defaults to `param_box`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_box: Option<Vec<[f64; 2]>>,
    pub initial_step: f64,
    /// `200 · arity` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NmConfig {
    fn default() -> Self {
        let o = NMOptions::for_dim(1);
        Self {
            param_box: None,
            truth_box: None,
            initial_step: o.initial_step[0],
            max_iterations: None,
            f_tol: o.f_tol,
            x_tol: o.x_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub theta_true: Vec<f64>,
    /// One parameter vector, or for `invert-sweep` the scanned scalar values.
    pub theta_assumed: Vec<f64>,
    pub dict_degree: u32,
    pub dt_obs: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub epsilon: OneOrMany,
    pub trials: usize,
    pub grid: Grid,
    /// Sampling interval for training initial states, applied to every axis.
    pub sample_box: [f64; 2],
    pub steps: usize,
    pub seed: u64,
    pub substeps: usize,
    pub output_dir: PathBuf,
    pub rollout: Rollout,
    pub norm: Norm,
    /// Intersection roots are kept within the scan widened by this fraction of its width.
    pub search_margin: f64,
    pub nm: NmConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<PolynomialConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Duffing,
            theta_true: vec![1.9, -1.9, 1.4],
            theta_assumed: vec![1.0, -1.0, 0.5],
            dict_degree: 5,
            dt_obs: 0.1,
            m: 10,
            epsilon: OneOrMany::One(1e10),
            trials: 100,
            grid: Grid {
                low: -1.0,
                high: 1.0,
                n: 5,
            },
            sample_box: [-1.0, 1.0],
            steps: 10,
            seed: 0,
            substeps: DEFAULT_SUBSTEPS,
            output_dir: PathBuf::from("out"),
            rollout: Rollout::Relift,
            norm: Norm::State,
            search_margin: 1.0,
            nm: NmConfig::default(),
            polynomial: None,
        }
    }
}

/// Config problems are always the user's: they map to exit code 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parses `doc`, applies `overrides` (`dotted.key=value`, value in TOML
/// syntax or a bare string), fills defaults and validates.
pub fn parse_config(doc: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = doc
        .parse()
        .map_err(|e: toml::de::Error| invalid(e.message().to_string()))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| invalid(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| invalid(format!("empty key in `{item}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<System, ConfigError> {
        match self.system {
            SystemKind::Duffing => Ok(System::Duffing),
            SystemKind::Vdp => Ok(System::VanDerPol),
            SystemKind::Polynomial => {
                let poly = self
                    .polynomial
                    .as_ref()
                    .ok_or_else(|| invalid("system = \"polynomial\" needs a [polynomial] table"))?;
                let tpl = PolynomialTemplate {
                    dim: poly.dim,
                    param_names: poly.params.clone(),
                    terms: poly
                        .terms
                        .iter()
                        .map(|t| TemplateTerm {
                            component: t.component,
                            exponents: t.exponents.clone(),
                            constant: t.constant,
                            weights: t.weights.clone(),
                        })
                        .collect(),
                };
                tpl.validate()
                    .map_err(|e| invalid(format!("polynomial: {e}")))?;
                Ok(System::Polynomial(tpl))
            }
        }
    }

    pub fn rollout_mode(&self) -> RolloutMode {
        match self.rollout {
            Rollout::LiftOnce => RolloutMode::LiftOnce,
            Rollout::Relift => RolloutMode::Relift,
        }
    }

    pub fn error_norm(&self) -> ErrorNorm {
        match self.norm {
            Norm::State => ErrorNorm::State,
            Norm::Lifted => ErrorNorm::Lifted,
        }
    }

    pub fn param_box(&self, arity: usize) -> Vec<(f64, f64)> {
        match &self.nm.param_box {
            Some(b) => b.iter().map(|&[l, h]| (l, h)).collect(),
            None => vec![(-10.0, 10.0); arity],
        }
    }

    pub fn truth_box(&self, arity: usize) -> Vec<(f64, f64)> {
        match &self.nm.truth_box {
            Some(b) => b.iter().map(|&[l, h]| (l, h)).collect(),
            None => self.param_box(arity),
        }
    }

    pub fn nm_options(&self, arity: usize) -> NMOptions {
        let mut o = NMOptions::for_dim(arity);
        o.initial_step = vec![self.nm.initial_step; arity];
        if let Some(it) = self.nm.max_iterations {
            o.max_iterations = it;
        }
        o.f_tol = self.nm.f_tol;
        o.x_tol = self.nm.x_tol;
        o
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive_count = [
            ("M", self.m),
            ("trials", self.trials),
            ("steps", self.steps),
            ("substeps", self.substeps),
        ];
        for (key, v) in positive_count {
            if v == 0 {
                return Err(invalid(format!("{key} must be >= 1")));
            }
        }
        if self.dict_degree == 0 {
            return Err(invalid("dict_degree must be >= 1"));
        }
        if !(self.dt_obs > 0.0 && self.dt_obs.is_finite()) {
            return Err(invalid(format!(
                "dt_obs must be positive, got {}",
                self.dt_obs
            )));
        }
        let eps = self.epsilon.values();
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid("epsilon values must be positive and finite"));
        }
        if self.grid.n < 2 {
            return Err(invalid("grid.n must be >= 2"));
        }
        if !(self.grid.low < self.grid.high) {
            return Err(invalid("grid.low must be below grid.high"));
        }
        if !(self.sample_box[0] < self.sample_box[1]) {
            return Err(invalid("sample_box must be [low, high] with low < high"));
        }
        if !(self.search_margin >= 0.0 && self.search_margin.is_finite()) {
            return Err(invalid("search_margin must be non-negative"));
        }
        if !(self.nm.initial_step != 0.0 && self.nm.initial_step.is_finite()) {
            return Err(invalid("nm.initial_step must be non-zero"));
        }
        if self.system != SystemKind::Polynomial && self.polynomial.is_some() {
            return Err(invalid(
                "[polynomial] is only used with system = \"polynomial\"",
            ));
        }
        let system = self.system()?;
        let arity = system.arity();
        if self.theta_true.len() != arity {
            return Err(invalid(format!(
                "theta_true has {} values, {} system takes {arity}",
                self.theta_true.len(),
                system.name()
            )));
        }
        // theta_assumed may also be a list of scanned scalars for a one-parameter system
        if self.theta_assumed.len() != arity && arity != 1 {
            return Err(invalid(format!(
                "theta_assumed has {} values, {} system takes {arity}",
                self.theta_assumed.len(),
                system.name()
            )));
        }
        for (key, b) in [
            ("nm.param_box", &self.nm.param_box),
            ("nm.truth_box", &self.nm.truth_box),
        ] {
            if let Some(b) = b {
                if b.len() != arity {
                    return Err(invalid(format!(
                        "{key} has {} ranges, system takes {arity}",
                        b.len()
                    )));
                }
                if b.iter().any(|[l, h]| !(l <= h)) {
                    return Err(invalid(format!("{key} ranges must be [low, high]")));
                }
            }
        }
        Ok(())
    }
}
