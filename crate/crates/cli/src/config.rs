use std::path::Path;

use dealias_core::eval::config_hash;
use dealias_core::pdnet::{ModelConfig, TrainConfig};
use dealias_core::srm::DeanParams;
use dealias_core::synth::CorpusRanges;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub frames: usize,
    pub aliased_fraction: f64,
    pub seed: u64,
    /// Radial x angular samples.
    pub grid: (usize, usize),
    pub v_nyquist: f64,
    pub ranges: CorpusRanges,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            frames: 2000,
            aliased_fraction: 0.36,
            seed: 0,
            grid: (192, 40),
            v_nyquist: 0.6,
            ranges: CorpusRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub q_values: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { folds: 9, seed: 0, q_values: vec![5.0, 10.0, 20.0, 40.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub iterations: Vec<usize>,
    pub shared_weights: bool,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { iterations: vec![1, 10, 20, 30], shared_weights: true }
    }
}

/// Every tunable of every command. Read from TOML or JSON, then overridden by
/// command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generate: GenerateConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seed of the initial network weights.
    pub init_seed: u64,
    /// Share of the corpus held out for model selection by `train` and
    /// `ablate-iters`.
    pub validation_fraction: f64,
    pub dean: DeanParams,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig { validation_fraction: 0.1, ..RunConfig::default() });
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed: Result<RunConfig, String> = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    /// Digest of the command name and the effective configuration.
    pub fn hash(&self, command: &str) -> Result<String, Failure> {
        #[derive(Serialize)]
        struct Key<'a> {
            command: &'a str,
            config: &'a RunConfig,
        }
        config_hash(&Key { command, config: self }).map_err(Failure::from)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.train.validate()?;
        self.dean.validate()?;
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Failure::config(format!("validation_fraction {} outside [0, 1)", self.validation_fraction)));
        }
        if self.model.iterations == 0 && !self.model.shared_weights {
            return Err(Failure::config("per-iteration weights need at least one iteration"));
        }
        Ok(())
    }
}

/// Parses `RxA`, e.g. `192x40`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, a) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected RxA, got {s:?}"))?;
    let r = r.trim().parse().map_err(|e| format!("radial size {r:?}: {e}"))?;
    let a = a.trim().parse().map_err(|e| format!("angular size {a:?}: {e}"))?;
    Ok((r, a))
}
