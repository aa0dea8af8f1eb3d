//! Experiment configuration: JSON, optionally layered on a named preset.

use std::fs;
use std::path::{Path, PathBuf};

use mbmlmc::problem::ProblemConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::presets;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMethod {
    /// Plain Monte Carlo on the fine-scale model.
    #[default]
    PlainMc,
    /// Multilevel estimator with the fine-scale model as last level.
    Mlmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    #[serde(default)]
    pub method: ReferenceMethod,
    /// Independent repetitions averaged into the reference value.
    #[serde(default = "default_reference_repetitions")]
    pub repetitions: usize,
    /// Reference tolerance as a fraction of the smallest requested tolerance.
    #[serde(default = "default_tol_factor")]
    pub tol_factor: f64,
}

fn default_reference_repetitions() -> usize {
    4
}

fn default_tol_factor() -> f64 {
    0.5
}

fn default_s() -> f64 {
    1.0
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        ReferenceSettings {
            method: ReferenceMethod::PlainMc,
            repetitions: default_reference_repetitions(),
            tol_factor: default_tol_factor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Strictly decreasing.
    pub tolerances: Vec<f64>,
    /// Level counts to try; the plan with the lowest estimated cost is run.
    pub levels: Vec<usize>,
    pub pilot_samples: usize,
    pub gamma: f64,
    /// Weight of the two-sided bounds reported for the pilot samples.
    #[serde(default = "default_s")]
    pub s: f64,
    pub repetitions: usize,
    /// Repetitions of the plain Monte Carlo baseline; defaults to `repetitions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_repetitions: Option<usize>,
    pub master_seed: u64,
    #[serde(default)]
    pub reference: ReferenceSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.tolerances.is_empty() {
            return bad("tolerances", "at least one tolerance is needed".into());
        }
        if let Some(t) = self.tolerances.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return bad("tolerances", format!("{t} is not positive"));
        }
        if self.tolerances.windows(2).any(|w| w[1] >= w[0]) {
            return bad("tolerances", "must be strictly decreasing".into());
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return bad("levels", "need at least one positive level count".into());
        }
        if self.pilot_samples < 2 {
            return bad("pilot_samples", format!("{} < 2", self.pilot_samples));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("{} not in (0, 1)", self.gamma));
        }
        if self.s == 0.0 || !self.s.is_finite() {
            return bad("s", "must be finite and nonzero".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1".into());
        }
        if self.baseline_repetitions == Some(0) {
            return bad("baseline_repetitions", "must be at least 1".into());
        }
        if self.reference.repetitions < 4 {
            return bad("reference.repetitions", format!("{} < 4", self.reference.repetitions));
        }
        if !(self.reference.tol_factor > 0.0 && self.reference.tol_factor <= 1.0) {
            return bad("reference.tol_factor", format!("{} not in (0, 1]", self.reference.tol_factor));
        }
        Ok(())
    }

    pub fn baseline_repetitions(&self) -> usize {
        self.baseline_repetitions.unwrap_or(self.repetitions)
    }

    pub fn smallest_tolerance(&self) -> f64 {
        self.tolerances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Recursively overlays `top` on `base`; non-object values replace.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn from_value(value: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config text. A top-level `"preset"` key selects the base values
/// the remaining keys override.
pub fn parse(text: &str, preset: Option<&str>) -> Result<ExperimentConfig> {
    let mut top: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let named = top
        .as_object_mut()
        .and_then(|o| o.remove("preset"))
        .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| CliError::Config("preset: expected a string".into())))
        .transpose()?;
    let name = preset.map(str::to_owned).or(named);
    let mut base = match name {
        Some(n) => preset_value(&n)?,
        None => Value::Object(Default::default()),
    };
    merge(&mut base, top);
    from_value(base)
}

fn preset_value(name: &str) -> Result<Value> {
    let cfg = presets::preset(name).ok_or_else(|| {
        CliError::Config(format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", ")))
    })?;
    Ok(serde_json::to_value(cfg).expect("config serializes"))
}

/// Loads the config from a file and/or a preset name.
pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            parse(&text, preset)
        }
        None => match preset {
            Some(n) => from_value(preset_value(n)?),
            None => Err(CliError::Config("either --config or --preset is required".into())),
        },
    }
}
