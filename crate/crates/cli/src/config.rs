//! Flat `key = value` run configuration with preset overlays.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bkap_core::problems::{DopingSpec, InitialSpec, KernelSpec, Preset, ProblemSetup};
use bkap_core::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

/// Which pipeline `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Preset(Preset),
    /// SG against collocation on user-specified inputs.
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Preset(p) => p.name(),
            Experiment::Custom => "custom",
        }
    }
}

impl FromStr for Experiment {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, SolverError> {
        if s.trim() == "custom" {
            Ok(Experiment::Custom)
        } else {
            s.parse().map(Experiment::Preset)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub setup: ProblemSetup,
    /// Relative size of the random perturbation in the decay experiment.
    pub decay_amplitude: f64,
    /// Number of recorded outputs in the decay experiment.
    pub decay_outputs: usize,
    pub output_dir: PathBuf,
}

/// Every accepted key, in emission order.
pub const KEYS: [&str; 18] = [
    "experiment",
    "physics.epsilon",
    "physics.beta",
    "physics.gamma",
    "physics.phi_bc",
    "physics.kernel",
    "physics.doping",
    "physics.initial",
    "grid.n_cells",
    "grid.n_v",
    "solver.dt",
    "solver.t_final",
    "uq.k",
    "uq.n_colloc",
    "uq.seed",
    "decay.amplitude",
    "decay.outputs",
    "output.dir",
];

impl RunConfig {
    pub fn from_experiment(experiment: Experiment) -> Self {
        let preset = match experiment {
            Experiment::Preset(p) => p,
            Experiment::Custom => Preset::Test1a,
        };
        Self {
            experiment,
            setup: preset.setup(),
            decay_amplitude: 1e-3,
            decay_outputs: 50,
            output_dir: PathBuf::from(format!("bkap-out/{}", experiment.name())),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::InvalidValue {
            key: key.to_string(),
            reason,
        };
        fn num<T: FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse::<T>().map_err(|e| format!("{e} ({v:?})"))
        }
        let s = &mut self.setup;
        match key {
            "experiment" => {
                let e: Experiment = value.parse().map_err(|e: SolverError| bad(e.to_string()))?;
                if e != self.experiment {
                    return Err(bad("experiment must be set before any other key".into()));
                }
            }
            "physics.epsilon" => s.epsilon = num(value).map_err(bad)?,
            "physics.beta" => s.beta = num(value).map_err(bad)?,
            "physics.gamma" => s.gamma = num(value).map_err(bad)?,
            "physics.phi_bc" => {
                let (l, r) = value
                    .split_once(',')
                    .ok_or_else(|| bad(format!("expected `left,right`, got {value:?}")))?;
                s.phi_bc = (num(l).map_err(bad)?, num(r).map_err(bad)?);
            }
            "physics.kernel" => s.kernel = value.parse::<KernelSpec>().map_err(|e| bad(e.to_string()))?,
            "physics.doping" => s.doping = value.parse::<DopingSpec>().map_err(|e| bad(e.to_string()))?,
            "physics.initial" => s.initial = value.parse::<InitialSpec>().map_err(|e| bad(e.to_string()))?,
            "grid.n_cells" => s.n_cells = num(value).map_err(bad)?,
            "grid.n_v" => s.n_v = num(value).map_err(bad)?,
            "solver.dt" => s.dt = num(value).map_err(bad)?,
            "solver.t_final" => s.t_final = num(value).map_err(bad)?,
            "uq.k" => s.k = num(value).map_err(bad)?,
            "uq.n_colloc" => s.n_colloc = num(value).map_err(bad)?,
            "uq.seed" => s.seed = num(value).map_err(bad)?,
            "decay.amplitude" => self.decay_amplitude = num(value).map_err(bad)?,
            "decay.outputs" => self.decay_outputs = num(value).map_err(bad)?,
            "output.dir" => self.output_dir = PathBuf::from(value.trim()),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.setup.validate().map_err(|e| match e {
            SolverError::InvalidParameter { name, reason } => ConfigError::Invalid { field: name, reason },
            other => ConfigError::Invalid {
                field: "physics.kernel".into(),
                reason: other.to_string(),
            },
        })?;
        if !(self.decay_amplitude.is_finite() && self.decay_amplitude >= 0.0) {
            return Err(ConfigError::Invalid {
                field: "decay.amplitude".into(),
                reason: "must be finite and non-negative".into(),
            });
        }
        if self.decay_outputs < 3 {
            return Err(ConfigError::Invalid {
                field: "decay.outputs".into(),
                reason: "need at least 3 outputs".into(),
            });
        }
        Ok(())
    }
}

/// Splits config text into `(key, value)` pairs; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        text: s.to_string(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Resolves a configuration: the preset named by `experiment` (the last one given,
/// `preset` otherwise, `custom` by default) is applied first, then every other pair in
/// order. Unknown keys are rejected.
pub fn resolve(preset: Option<Preset>, pairs: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    for (k, _) in pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
    }
    let experiment = match pairs.iter().rev().find(|(k, _)| k == "experiment") {
        Some((_, v)) => v.parse::<Experiment>().map_err(|e| ConfigError::InvalidValue {
            key: "experiment".into(),
            reason: e.to_string(),
        })?,
        None => preset.map_or(Experiment::Custom, Experiment::Preset),
    };
    let mut cfg = RunConfig::from_experiment(experiment);
    for (k, v) in pairs.iter().filter(|(k, _)| k != "experiment") {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut pairs = parse_pairs(text)?;
    pairs.extend_from_slice(overrides);
    resolve(None, &pairs)
}

pub fn parse_config_file(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, overrides)
}

/// Writes every key; `parse_config_str(&emit_config(c), &[])` reproduces `c`.
pub fn emit_config(cfg: &RunConfig) -> String {
    let s = &cfg.setup;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("experiment", cfg.experiment.name().into());
    put("physics.epsilon", format!("{:?}", s.epsilon));
    put("physics.beta", format!("{:?}", s.beta));
    put("physics.gamma", format!("{:?}", s.gamma));
    put("physics.phi_bc", format!("{:?},{:?}", s.phi_bc.0, s.phi_bc.1));
    put("physics.kernel", s.kernel.to_string());
    put("physics.doping", s.doping.to_string());
    put("physics.initial", s.initial.to_string());
    put("grid.n_cells", s.n_cells.to_string());
    put("grid.n_v", s.n_v.to_string());
    put("solver.dt", format!("{:?}", s.dt));
    put("solver.t_final", format!("{:?}", s.t_final));
    put("uq.k", s.k.to_string());
    put("uq.n_colloc", s.n_colloc.to_string());
    put("uq.seed", s.seed.to_string());
    put("decay.amplitude", format!("{:?}", cfg.decay_amplitude));
    put("decay.outputs", cfg.decay_outputs.to_string());
    put("output.dir", cfg.output_dir.display().to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_defaults_apply_before_overrides() {
        let c = parse_config_str("experiment = test1b\n", &[]).unwrap();
        assert_eq!(c.setup.epsilon, 1e-5);
        assert_eq!(c.setup.t_final, 0.2);
        let c = parse_config_str("solver.dt = 1e-6\nexperiment = test1b\n", &[]).unwrap();
        assert_eq!(c.setup.dt, 1e-6);
        assert_eq!(c.setup.epsilon, 1e-5);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse_config_str("experiment = test1a\nsolver.dtt = 1\n", &[]).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(k) if k == "solver.dtt"));
    }

    #[test]
    fn negative_dt_names_field() {
        let e = parse_config_str("experiment = test1a", &[("solver.dt".into(), "-1".into())]).unwrap_err();
        assert!(e.to_string().contains("dt"), "{e}");
        assert!(matches!(e, ConfigError::Invalid { ref field, .. } if field == "dt"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let e = parse_config_str("experiment = test1a\nnonsense\n", &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn emit_round_trips_presets() {
        for p in Preset::ALL {
            let c = RunConfig::from_experiment(Experiment::Preset(p));
            assert_eq!(parse_config_str(&emit_config(&c), &[]).unwrap(), c);
        }
    }
}
