#![allow(dead_code)]

use std::path::Path;

use ditok_core::harness::config::Auto;
use ditok_core::harness::{make_synthetic_corpus, ExperimentConfig, InputMode, SynthConfig};

/// Desk-scale transducer that trains on the synthetic corpus in minutes
/// on one core.
pub fn desk_config(data_dir: &Path, out_dir: &Path, langs: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: "desk".into(),
        languages: langs.iter().map(|s| s.to_string()).collect(),
        input_mode: InputMode::Discrete,
        data_dir: data_dir.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        lr: Auto::Value(3e-3),
        ..ExperimentConfig::default()
    };
    cfg.model.d_model = 32;
    cfg.model.n_heads = 2;
    cfg.model.factors = vec![1, 2];
    cfg.model.embed_dim = 32;
    cfg.model.joint_dim = 32;
    cfg.frontend.dim = 32;
    cfg.frontend.target_rate_hz = 50.0;
    cfg
}

pub fn synth(root: &Path, lang: &str, n_utts: usize, audio: bool, seed: u64) {
    let cfg = SynthConfig {
        lang: lang.into(),
        n_utts,
        audio,
        seed,
        ..SynthConfig::default()
    };
    make_synthetic_corpus(&cfg, root).unwrap();
}
