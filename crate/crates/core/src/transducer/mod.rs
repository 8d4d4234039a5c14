//! Neural transducer: multi-rate encoder, stateless predictor and joint
//! network, plus the optional token frontend in front of the encoder.

pub mod checkpoint;
mod encoder;
mod joint;
mod layers;
mod predictor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, restore, snapshot, write_checkpoint, NamedParam,
};
pub use encoder::{Encoder, EncoderConfig, StackConfig};
pub use joint::{Joint, JointConfig};
pub use layers::{LayerNorm, Linear};
pub use predictor::{Predictor, PredictorConfig};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentPlan;
use crate::bpe::BLANK_ID;
use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::frontend::{Frontend, FrontendConfig};
use crate::numerics::{Graph, ParamStore, Tensor, Var};

pub const CHECKPOINT_FILE: &str = "model.dscp";
pub const MODEL_CONFIG_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    /// Continuous features (e.g. fbank) fed straight to the encoder.
    Features { dim: usize },
    /// Discrete tokens embedded by the frontend.
    Tokens {
        codebook_sizes: Vec<u32>,
        frontend: FrontendConfig,
    },
}

impl InputConfig {
    pub fn dim(&self) -> usize {
        match self {
            InputConfig::Features { dim } => *dim,
            InputConfig::Tokens { frontend, .. } => frontend.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input: InputConfig,
    pub encoder: EncoderConfig,
    pub predictor: PredictorConfig,
    pub joint: JointConfig,
    /// Output classes including the blank at id 0.
    pub vocab_size: usize,
    pub seed: u64,
}

pub enum ModelInput<'a> {
    Features(&'a Tensor),
    Tokens(&'a TokenSequence),
}

pub struct AsrModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    frontend: Option<Frontend>,
    encoder: Encoder,
    predictor: Predictor,
    joint: Joint,
}

impl AsrModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.encoder.input_dim != config.input.dim() {
            return Err(Error::Config(format!(
                "encoder input_dim {} differs from the {}-dim input",
                config.encoder.input_dim,
                config.input.dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let frontend = match &config.input {
            InputConfig::Features { .. } => None,
            InputConfig::Tokens {
                codebook_sizes,
                frontend,
            } => Some(Frontend::new(&mut store, codebook_sizes, frontend.clone(), &mut rng)?),
        };
        let encoder = Encoder::new(&mut store, config.encoder.clone(), &mut rng)?;
        let d = encoder.output_dim();
        let predictor = Predictor::new(&mut store, config.predictor.clone(), config.vocab_size, BLANK_ID, d, &mut rng)?;
        let joint = Joint::new(&mut store, config.joint.clone(), d, d, config.vocab_size, &mut rng)?;
        Ok(Self {
            config,
            store,
            frontend,
            encoder,
            predictor,
            joint,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn joint(&self) -> &Joint {
        &self.joint
    }

    pub fn frontend(&self) -> Option<&Frontend> {
        self.frontend.as_ref()
    }

    pub fn blank(&self) -> u32 {
        BLANK_ID
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Encoder input length for `input`.
    pub fn input_frames(&self, input: &ModelInput) -> Result<usize> {
        match (input, &self.frontend) {
            (ModelInput::Features(x), None) => Ok(x.rows()),
            (ModelInput::Tokens(t), Some(fe)) => Ok(fe.output_len(t)),
            _ => Err(Error::Validation("input kind does not match the model".into())),
        }
    }

    /// Encoder input as a graph node (features or embedded tokens).
    pub fn input_var(&self, g: &mut Graph, input: &ModelInput) -> Result<Var> {
        match (input, &self.frontend) {
            (ModelInput::Features(x), None) => {
                if x.cols() != self.config.encoder.input_dim {
                    return Err(Error::Dimension(format!(
                        "model expects {}-dim features, got {}",
                        self.config.encoder.input_dim,
                        x.cols()
                    )));
                }
                Ok(g.input(x))
            }
            (ModelInput::Tokens(t), Some(fe)) => fe.forward(g, t),
            _ => Err(Error::Validation("input kind does not match the model".into())),
        }
    }

    /// Transducer loss of `labels`, optionally augmenting the encoder input.
    pub fn loss(&self, g: &mut Graph, input: &ModelInput, labels: &[u32], plan: Option<&AugmentPlan>) -> Result<Var> {
        let mut x = self.input_var(g, input)?;
        if let Some(p) = plan {
            x = p.apply_graph(g, x)?;
        }
        let h = self.encoder.forward(g, x)?;
        let f = self.predictor.forward(g, labels)?;
        let lp = self.joint.forward(g, h, f)?;
        let frames = g.shape(h).0;
        g.rnnt_loss(lp, frames, labels, BLANK_ID)
    }

    /// Encoder output without augmentation.
    pub fn encode(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let x = self.input_var(&mut g, input)?;
        let h = self.encoder.forward(&mut g, x)?;
        Ok(g.tensor(h))
    }

    /// Full lattice of log-probs, `T' × (U+1) × V`.
    pub fn log_probs(&self, input: &ModelInput, labels: &[u32]) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let x = self.input_var(&mut g, input)?;
        let h = self.encoder.forward(&mut g, x)?;
        let f = self.predictor.forward(&mut g, labels)?;
        let lp = self.joint.forward(&mut g, h, f)?;
        let t = g.shape(h).0;
        g.tensor(lp).reshape(vec![t, labels.len() + 1, self.config.vocab_size])
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_checkpoint(&snapshot(&self.store), dir.join(CHECKPOINT_FILE))?;
        let json = serde_json::to_string_pretty(&self.config)?;
        crate::corpus::formats::write_file(&dir.join(MODEL_CONFIG_FILE), json.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let bytes = crate::corpus::formats::read_file(&dir.join(MODEL_CONFIG_FILE))?;
        let config: ModelConfig = serde_json::from_slice(&bytes)?;
        let mut model = Self::new(config)?;
        restore(&mut model.store, &read_checkpoint(dir.join(CHECKPOINT_FILE))?)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradients, GradCheck};

    fn tiny(input: InputConfig, vocab: usize) -> ModelConfig {
        let dim = input.dim();
        let mut encoder = EncoderConfig::uniform(dim, 16, 2, &[1, 2, 4, 8, 4, 2]);
        encoder.conv_kernel = 3;
        encoder.ffn_mult = 2;
        encoder.max_len = 64;
        ModelConfig {
            input,
            encoder,
            predictor: PredictorConfig {
                context_size: 2,
                embed_dim: 8,
            },
            joint: JointConfig { joint_dim: 12 },
            vocab_size: vocab,
            seed: 5,
        }
    }

    fn ramp(t: usize, d: usize) -> Tensor {
        Tensor::new(vec![t, d], (0..t * d).map(|i| (i as f64 * 0.31).sin()).collect()).unwrap()
    }

    #[test]
    fn encoder_length_map() {
        let model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 5)).unwrap();
        for t in [8, 9, 16, 17, 31] {
            let h = model.encode(&ModelInput::Features(&ramp(t, 6))).unwrap();
            assert_eq!(h.rows(), t.div_ceil(2));
            assert_eq!(h.cols(), 16);
        }
        assert!(matches!(
            model.encode(&ModelInput::Features(&ramp(7, 6))),
            Err(Error::Length(m)) if m.contains('8')
        ));
    }

    #[test]
    fn zero_input_stays_finite() {
        let model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 5)).unwrap();
        let h = model.encode(&ModelInput::Features(&Tensor::zeros(vec![16, 6]))).unwrap();
        assert!(h.all_finite());
    }

    #[test]
    fn predictor_is_stateless() {
        let model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 7)).unwrap();
        let p = model.predictor();
        let mut g = Graph::new(&model.store);
        let a = p.forward(&mut g, &[1, 2, 3, 4, 5]).unwrap();
        let b = p.forward(&mut g, &[6, 6, 4, 5]).unwrap();
        // position 5 of `a` and 4 of `b` both see (4, 5)
        let d = g.shape(a).1;
        assert_eq!(&g.value(a)[5 * d..6 * d], &g.value(b)[4 * d..5 * d]);
        assert_eq!(&g.value(a)[5 * d..6 * d], p.context_vector(&model.store, &[4, 5]).as_slice());
        let empty = p.forward(&mut g, &[]).unwrap();
        assert_eq!(g.shape(empty), (1, d));
        assert!(matches!(p.forward(&mut g, &[2, 0]), Err(Error::Validation(_))));
    }

    #[test]
    fn joint_zero_weights_uniform() {
        let mut model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 2)).unwrap();
        for p in model.store.iter_mut().filter(|p| p.name.starts_with("joint.")) {
            p.value.data_mut().fill(0.0);
        }
        let lp = model.log_probs(&ModelInput::Features(&ramp(8, 6)), &[]).unwrap();
        for v in lp.data() {
            assert!((v + 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_rows_normalize() {
        let model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 6)).unwrap();
        let lp = model.log_probs(&ModelInput::Features(&ramp(12, 6)), &[3, 1, 4]).unwrap();
        for row in lp.data().chunks(6) {
            assert!((row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn full_model_gradient_check() {
        let mut model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 8)).unwrap();
        let x = ramp(12, 6);
        let ids: Vec<_> = model.store.ids().collect();
        let cfg = GradCheck {
            samples_per_param: 4,
            ..GradCheck::default()
        };
        let AsrModel {
            store,
            encoder,
            predictor,
            joint,
            ..
        } = &mut model;
        let err = check_gradients(store, &ids, cfg, |g| {
            let xv = g.input(&x);
            let h = encoder.forward(g, xv)?;
            let f = predictor.forward(g, &[3, 5])?;
            let lp = joint.forward(g, h, f)?;
            let t = g.shape(h).0;
            g.rnnt_loss(lp, t, &[3, 5], 0)
        })
        .unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(
            InputConfig::Tokens {
                codebook_sizes: vec![10],
                frontend: FrontendConfig {
                    dim: 6,
                    ..FrontendConfig::default()
                },
            },
            5,
        );
        let model = AsrModel::new(cfg).unwrap();
        model.save(dir.path()).unwrap();
        let back = AsrModel::load(dir.path()).unwrap();
        assert_eq!(back.config, model.config);
        let a = snapshot(&model.store);
        assert_eq!(snapshot(&back.store), a);
        let bytes = encode_checkpoint(&a).unwrap();
        assert_eq!(encode_checkpoint(&decode_checkpoint(&bytes).unwrap()).unwrap(), bytes);
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Length(_))));
    }
}
