//! TOML run configuration. Each command reads its own section; unknown keys
//! anywhere are rejected.
//!
//! ```toml
//! [simulate]
//! seed = 7
//! snr_db = [-5.0, 0.0, 5.0, 10.0]
//! rooms = [[6.0, 4.0, 3.0]]
//! train = { clean = 20, rt60 = [0.3, 0.4, 0.5, 0.6] }
//! dev = { clean = 5, rt60 = [0.3, 0.4, 0.5, 0.6] }
//! test = { clean = 5, rt60 = [0.3, 0.4, 0.5, 0.6] }
//!
//! [train]
//! model = "proposed"
//! embed_dim = 20
//! hidden = 64
//!
//! [train.optimizer]
//! lr = 0.002
//! batch_utterances = 4
//! min_epochs = 10
//! max_epochs = 10
//!
//! [evaluate]
//! methods = ["unprocessed", "wpe", "proposed"]
//!
//! [wpe]
//! taps = 10
//! delay = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Error, Result};
use crate::neural::TrainConfig;
use crate::roomsim::SimulationConfig;
use crate::wpe::WpeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Proposed,
    BaselineBlstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StageChoice {
    /// Clustering pre-training of the embedding stage.
    Dc,
    /// Joint training from a stage-1 checkpoint.
    Joint,
    /// Stage 1 followed by stage 2.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelChoice,
    pub stage: StageChoice,
    pub init: Option<PathBuf>,
    pub embed_dim: usize,
    pub hidden: usize,
    pub optimizer: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            manifest: None,
            out_dir: None,
            model: ModelChoice::Proposed,
            stage: StageChoice::Both,
            init: None,
            embed_dim: 20,
            hidden: 64,
            optimizer: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub manifest: Option<PathBuf>,
    /// Simulation output holding `<split>/target` and `<split>/mixture`.
    pub data_dir: Option<PathBuf>,
    /// Holds one folder of enhanced files per method.
    pub enhanced_dir: Option<PathBuf>,
    pub methods: Vec<String>,
    pub split: String,
    pub out_dir: Option<PathBuf>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            manifest: None,
            data_dir: None,
            enhanced_dir: None,
            methods: vec!["unprocessed".into()],
            split: "test".into(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub simulate: Option<SimulationConfig>,
    pub train: Option<TrainSection>,
    pub evaluate: Option<EvaluateSection>,
    pub wpe: Option<WpeConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid_config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::InvalidConfig(format!("reading {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Writes `section` under `[name]` as `resolved_config.toml` in `dir`.
    pub fn write_resolved<S: Serialize>(dir: &Path, name: &str, section: &S) -> Result<()> {
        let mut table = toml::Table::new();
        let value = toml::Value::try_from(section).map_err(|e| invalid_config(e.to_string()))?;
        table.insert(name.to_string(), value);
        let text = toml::to_string_pretty(&table).map_err(|e| invalid_config(e.to_string()))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join("resolved_config.toml");
        std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Seed from the environment, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("DEREVKIT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid_config(format!("DEREVKIT_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_example_parses() {
        let text: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start().to_string() + "\n")
            .collect();
        let cfg = RunConfig::parse(&text).unwrap();
        let sim = cfg.simulate.unwrap();
        assert_eq!(sim.seed, 7);
        assert_eq!(sim.train.clean, 20);
        let train = cfg.train.unwrap();
        assert_eq!(train.optimizer.batch_utterances, 4);
        assert_eq!(train.optimizer.dropout, 0.5);
        assert_eq!(cfg.evaluate.unwrap().methods.len(), 3);
        assert_eq!(cfg.wpe.unwrap().iterations, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(RunConfig::parse("[train.optimizer]\nlearnrate = 0.1\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[wpe]\ntaps = 4\n").is_ok());
    }

    #[test]
    fn resolved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let section = TrainSection::default();
        RunConfig::write_resolved(dir.path(), "train", &section).unwrap();
        let back = RunConfig::load(Some(&dir.path().join("resolved_config.toml"))).unwrap();
        assert_eq!(back.train.unwrap(), section);
    }
}
