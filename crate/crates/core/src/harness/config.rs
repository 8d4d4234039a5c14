use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentConfig;
use crate::corpus::manifest::is_valid_lang;
use crate::error::{Error, Result};
use crate::fbank::SpecAugmentConfig;
use crate::frontend::FrontendConfig;
use crate::tokenizer::KmeansMode;
use crate::transducer::{EncoderConfig, JointConfig, PredictorConfig, StackConfig};

pub const SEED_ENV: &str = "DITOK_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    Fbank,
    Discrete,
}

impl InputMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputMode::Fbank => "fbank",
            InputMode::Discrete => "discrete",
        }
    }
}

/// `"auto"` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Auto<T> {
    Value(T),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl<T: Copy> Auto<T> {
    pub fn auto() -> Self {
        Auto::Keyword(AutoKeyword::Auto)
    }

    pub fn value(&self) -> Option<T> {
        match self {
            Auto::Value(v) => Some(*v),
            Auto::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub factors: Vec<usize>,
    pub blocks_per_stack: usize,
    pub conv_kernel: usize,
    pub ffn_mult: usize,
    pub max_len: usize,
    pub context_size: usize,
    pub embed_dim: usize,
    pub joint_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 96,
            n_heads: 4,
            factors: vec![1, 2, 4, 8, 4, 2],
            blocks_per_stack: 1,
            conv_kernel: 15,
            ffn_mult: 4,
            max_len: 2048,
            context_size: 2,
            embed_dim: 512,
            joint_dim: 256,
        }
    }
}

impl ModelSection {
    pub fn encoder(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            d_model: self.d_model,
            stacks: self
                .factors
                .iter()
                .map(|&factor| StackConfig {
                    factor,
                    n_blocks: self.blocks_per_stack,
                    d_model: self.d_model,
                    n_heads: self.n_heads,
                })
                .collect(),
            conv_kernel: self.conv_kernel,
            ffn_mult: self.ffn_mult,
            max_len: self.max_len,
            output_factor: 2,
        }
    }

    pub fn predictor(&self) -> PredictorConfig {
        PredictorConfig {
            context_size: self.context_size,
            embed_dim: self.embed_dim,
        }
    }

    pub fn joint(&self) -> JointConfig {
        JointConfig {
            joint_dim: self.joint_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// Stop once dev WER (greedy) is at or below this value.
    pub early_stop_wer: Option<f64>,
    pub eval_every: usize,
    pub beam: usize,
    pub divergence_window: usize,
    pub divergence_factor: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_grad_norm: 5.0,
            early_stop_wer: None,
            eval_every: 1,
            beam: 1,
            divergence_window: 200,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansSection {
    pub target_hours: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub mode: KmeansMode,
    pub n_init: usize,
}

impl Default for KmeansSection {
    fn default() -> Self {
        Self {
            target_hours: 0.1,
            max_iters: 100,
            tol: 1e-4,
            mode: KmeansMode::Full,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub languages: Vec<String>,
    pub input_mode: InputMode,
    pub mix_data: bool,
    pub shared_kmeans: bool,
    pub units: usize,
    /// `None`: 500 for single-language runs, 3500 for mixed runs.
    pub bpe_size: Option<usize>,
    pub epochs: Auto<usize>,
    pub lr: Auto<f64>,
    pub seed: u64,
    /// Holds `<lang>/<split>.jsonl` manifests.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelSection,
    pub train: TrainSection,
    pub kmeans: KmeansSection,
    pub frontend: FrontendConfig,
    pub augment: AugmentConfig,
    pub spec_augment: SpecAugmentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            languages: vec!["syn".into()],
            input_mode: InputMode::Discrete,
            mix_data: false,
            shared_kmeans: false,
            units: 32,
            bpe_size: None,
            epochs: Auto::auto(),
            lr: Auto::auto(),
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            model: ModelSection::default(),
            train: TrainSection::default(),
            kmeans: KmeansSection::default(),
            frontend: FrontendConfig::default(),
            augment: AugmentConfig::default(),
            spec_augment: SpecAugmentConfig::default(),
        }
    }
}

/// Fields that do not change results and are left out of the hash.
#[derive(Serialize)]
struct Semantic<'a> {
    languages: &'a [String],
    input_mode: InputMode,
    mix_data: bool,
    shared_kmeans: bool,
    units: usize,
    bpe_size: usize,
    epochs: &'a Auto<usize>,
    lr: &'a Auto<f64>,
    seed: u64,
    data_dir: &'a Path,
    model: &'a ModelSection,
    train: &'a TrainSection,
    kmeans: &'a KmeansSection,
    frontend: &'a FrontendConfig,
    augment: &'a AugmentConfig,
    spec_augment: &'a SpecAugmentConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// `DITOK_SEED` overrides the configured seed.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::Config("at least one language is required".into()));
        }
        if let Some(bad) = self.languages.iter().find(|l| !is_valid_lang(l)) {
            return Err(Error::Config(format!("unknown language code {bad:?}")));
        }
        if self.units == 0 {
            return Err(Error::Config("units must be positive".into()));
        }
        if self.train.batch_size == 0 || self.train.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if let Some(lr) = self.lr.value() {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        self.augment.validate()?;
        self.model.encoder(self.frontend.dim).validate()
    }

    pub fn bpe_target(&self) -> usize {
        self.bpe_size
            .unwrap_or(if self.mix_data && self.languages.len() > 1 { 3500 } else { 500 })
    }

    /// SHA-256 over the canonical JSON of every semantic field.
    pub fn config_hash(&self) -> String {
        let sem = Semantic {
            languages: &self.languages,
            input_mode: self.input_mode,
            mix_data: self.mix_data,
            shared_kmeans: self.shared_kmeans,
            units: self.units,
            bpe_size: self.bpe_target(),
            epochs: &self.epochs,
            lr: &self.lr,
            seed: self.seed,
            data_dir: &self.data_dir,
            model: &self.model,
            train: &self.train,
            kmeans: &self.kmeans,
            frontend: &self.frontend,
            augment: &self.augment,
            spec_augment: &self.spec_augment,
        };
        let json = serde_json::to_vec(&sem).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_auto() {
        let text = r#"
            name = "t"
            languages = ["syn-a", "syn-b"]
            input_mode = "fbank"
            epochs = "auto"
            lr = 0.002
            [model]
            d_model = 32
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.epochs.value(), None);
        assert_eq!(cfg.lr.value(), Some(0.002));
        assert_eq!(cfg.model.d_model, 32);
        assert_eq!(cfg.input_mode, InputMode::Fbank);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = ExperimentConfig::from_toml("name = \"x\"\nunits = \"many\"\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(
            ExperimentConfig::from_toml("languages = [\"xx\"]"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.name = "other".into();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.units = 64;
        assert_ne!(a.config_hash(), b.config_hash());
        let mut c = a.clone();
        c.augment.noise_prob = 0.25;
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn bpe_defaults() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.bpe_target(), 500);
        cfg.languages = vec!["de".into(), "fr".into()];
        cfg.mix_data = true;
        assert_eq!(cfg.bpe_target(), 3500);
    }
}
