//! Experiment configuration: TOML sections with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::calibration::CalibrationConfig;
use crate::data::CorpusSplit;
use crate::device::DevicePopulationConfig;
use crate::error::{Result, SimError};
use crate::nn::{Hardware, NetworkSpec, TrainerConfig};
use crate::periphery::PeripheryConfig;
use crate::tiki_taka::TikiTakaConfig;

/// Environment variable holding the root for relative data paths.
pub const DATA_DIR_ENV: &str = "RPU_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Toy,
    FcnMnist,
    CnnMnist,
    LstmWp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden widths of `fcn_mnist`.
    pub fcn_hidden: Vec<usize>,
    pub lstm_hidden: usize,
    pub lstm_blocks: usize,
    pub toy_features: usize,
    pub toy_hidden: usize,
    pub toy_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            fcn_hidden: vec![256, 128],
            lstm_hidden: 64,
            lstm_blocks: 2,
            toy_features: 4,
            toy_hidden: 8,
            toy_classes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mnist_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    /// Leading characters used for training; the rest (or `corpus_test_chars`) for test.
    pub corpus_train_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_train_chars: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_test_chars: Option<usize>,
    /// Keep only the first samples (images) or characters (text).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_subset_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_subset_size: Option<usize>,
    pub toy_train: usize,
    pub toy_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            mnist_dir: None,
            corpus_path: None,
            corpus_train_fraction: 0.9,
            corpus_train_chars: None,
            corpus_test_chars: None,
            train_subset_size: None,
            test_subset_size: None,
            toy_train: 300,
            toy_test: 150,
        }
    }
}

impl DataConfig {
    pub fn corpus_split(&self) -> CorpusSplit {
        match (self.corpus_train_chars, self.corpus_test_chars) {
            (Some(train), Some(test)) => CorpusSplit::Counts { train, test },
            _ => CorpusSplit::Fraction(self.corpus_train_fraction),
        }
    }
}

/// Relative paths are taken from `root` when given.
pub fn resolve_data_path(p: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub metrics_file: String,
    /// SVG learning curve written next to the metrics when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_file: Option<String>,
    /// Fill the `wall_seconds` column. Off by default so metrics files are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            metrics_file: "metrics.csv".into(),
            plot_file: Some("curve.svg".into()),
            record_wall_time: false,
        }
    }
}

impl OutputConfig {
    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join(&self.metrics_file)
    }

    pub fn plot_path(&self) -> Option<PathBuf> {
        self.plot_file.as_ref().map(|f| self.dir.join(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub trainer: TrainerConfig,
    pub network: NetworkConfig,
    pub device: DevicePopulationConfig,
    pub periphery: PeripheryConfig,
    pub tiki: TikiTakaConfig,
    /// Per-layer replacements for `tiki`.
    pub tiki_layers: Vec<TikiTakaConfig>,
    pub calibration: CalibrationConfig,
    pub data: DataConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Toy,
            seed: 1,
            trainer: TrainerConfig::default(),
            network: NetworkConfig::default(),
            device: DevicePopulationConfig::default(),
            periphery: PeripheryConfig::default(),
            tiki: TikiTakaConfig::default(),
            tiki_layers: Vec::new(),
            calibration: CalibrationConfig::default(),
            data: DataConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Parse an override value as a TOML literal, falling back to a bare string
/// so `--set preset=toy` works without quoting.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| SimError::Config(format!("empty key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| SimError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parse TOML text, then apply `key=value` overrides in order.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: Table = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    /// A copy with `key=value` overrides applied.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_toml_str(&self.to_toml_string()?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.device.validate()?;
        self.periphery.validate()?;
        self.tiki.validate()?;
        for t in &self.tiki_layers {
            t.validate()?;
        }
        if let Some(p) = self.calibration.programming_error_std {
            if !(p >= 0.0) {
                return Err(SimError::InvalidConfig("calibration.programming_error_std must be >= 0".into()));
            }
        }
        if self.output.metrics_file.is_empty() {
            return Err(SimError::InvalidConfig("output.metrics_file is empty".into()));
        }
        match self.preset {
            Preset::FcnMnist | Preset::CnnMnist if self.data.mnist_dir.is_none() => {
                Err(SimError::InvalidConfig("data.mnist_dir is required for MNIST presets".into()))
            }
            Preset::LstmWp if self.data.corpus_path.is_none() => {
                Err(SimError::InvalidConfig("data.corpus_path is required for lstm_wp".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn hardware(&self) -> Hardware {
        Hardware {
            device: self.device.clone(),
            periphery: self.periphery.clone(),
            tiki: self.tiki.clone(),
            tiki_layers: self.tiki_layers.clone(),
            calibration: self.calibration.clone(),
        }
    }

    /// Topology for the preset; `vocab` is needed only by `lstm_wp`.
    pub fn network_spec(&self, vocab: Option<usize>) -> Result<NetworkSpec> {
        let n = &self.network;
        match self.preset {
            Preset::Toy => NetworkSpec::toy(n.toy_features, n.toy_hidden, n.toy_classes),
            Preset::FcnMnist => NetworkSpec::fcn_mnist(&n.fcn_hidden),
            Preset::CnnMnist => NetworkSpec::cnn_mnist(),
            Preset::LstmWp => NetworkSpec::lstm_wp(
                vocab.ok_or_else(|| SimError::InvalidConfig("lstm_wp needs the corpus vocabulary".into()))?,
                n.lstm_hidden,
                n.lstm_blocks,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TrainMode;
    use crate::tiki_taka::TransferVectors;

    const SAMPLE: &str = r#"
preset = "toy"
seed = 9

[trainer]
mode = "analog_tiki_taka"
eta = 0.05
epochs = 3

[tiki]
gamma = 0.5
transfer_vectors = "hadamard4"

[device]
symmetry_offset_std = 0.01

[output]
dir = "runs/x"
"#;

    #[test]
    fn parse_fills_defaults() {
        let c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        assert_eq!(c.trainer.mode, TrainMode::AnalogTikiTaka);
        assert_eq!(c.tiki.gamma, 0.5);
        assert_eq!(c.tiki.transfer_vectors, TransferVectors::Hadamard(4));
        assert_eq!(c.tiki.lambda_c, TikiTakaConfig::default().lambda_c);
        assert_eq!(c.periphery, PeripheryConfig::default());
        assert_eq!(c.device.dw_min0_mean, 0.001);
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        c.calibration.programming_error_std = Some(0.003);
        c.tiki_layers = vec![TikiTakaConfig::default()];
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(c, again);
        let d = ExperimentConfig::default();
        assert_eq!(d, ExperimentConfig::from_toml_str(&d.to_toml_string().unwrap(), &[]).unwrap());
    }

    #[test]
    fn dotted_overrides() {
        let ov = |k: &str, v: &str| (k.to_string(), v.to_string());
        let c = ExperimentConfig::from_toml_str(
            SAMPLE,
            &[
                ov("tiki.ns", "5"),
                ov("trainer.mode", "fp"),
                ov("network.fcn_hidden", "[64, 32]"),
                ov("tiki.transfer_vectors", "one_hot"),
                ov("calibration.programming_error_std", "0.02"),
            ],
        )
        .unwrap();
        assert_eq!(c.tiki.ns, 5);
        assert_eq!(c.trainer.mode, TrainMode::Fp);
        assert_eq!(c.network.fcn_hidden, vec![64, 32]);
        assert_eq!(c.tiki.transfer_vectors, TransferVectors::OneHot);
        assert_eq!(c.calibration.programming_error_std, Some(0.02));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[tiki]\nns = 0", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("preset = \"fcn_mnist\"", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &[("seed.x".into(), "1".into())]).is_err());
    }
}
