use ditok_core::corpus::TokenSequence;
use ditok_core::frontend::FrontendConfig;
use ditok_core::numerics::{Graph, ParamStore, Tensor};
use ditok_core::transducer::{AsrModel, Encoder, EncoderConfig, InputConfig, JointConfig, ModelConfig, ModelInput, PredictorConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(input: InputConfig, dim: usize) -> ModelConfig {
    ModelConfig {
        input,
        encoder: EncoderConfig::uniform(dim, 16, 2, &[1, 2, 4]),
        predictor: PredictorConfig { context_size: 2, embed_dim: 8 },
        joint: JointConfig { joint_dim: 16 },
        vocab_size: 7,
        seed: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encoder_output_length(t in 4usize..90, factors in prop::sample::subsequence(vec![1usize, 2, 3, 4, 8], 1..4)) {
        let cfg = EncoderConfig::uniform(5, 8, 2, &factors);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, cfg.clone(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = Tensor::new(vec![t, 5], (0..t * 5).map(|i| (i as f64).cos()).collect()).unwrap();
        let mut g = Graph::new(&store);
        let xv = g.input(&x);
        let h = enc.forward(&mut g, xv);
        if t < cfg.min_frames() {
            prop_assert!(h.is_err());
        } else {
            let h = h.unwrap();
            prop_assert_eq!(g.shape(h), (t.div_ceil(2), 8));
            prop_assert_eq!(cfg.output_len(t), t.div_ceil(2));
            prop_assert!(g.value(h).iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn log_probs_are_normalized() {
    let model = AsrModel::new(tiny(InputConfig::Features { dim: 6 }, 6)).unwrap();
    let x = Tensor::new(vec![13, 6], (0..78).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
    let lp = model.log_probs(&ModelInput::Features(&x), &[2, 3, 4]).unwrap();
    assert_eq!(lp.shape(), &[7, 4, 7]);
    for row in lp.data().chunks(7) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }
}

#[test]
fn token_input_through_frontend() {
    let input = InputConfig::Tokens {
        codebook_sizes: vec![32],
        frontend: FrontendConfig { dim: 10, target_rate_hz: 100.0, init_bound: 0.1 },
    };
    let model = AsrModel::new(tiny(input, 10)).unwrap();
    let seq = TokenSequence::new(vec![(0..25).map(|i| i % 32).collect()], vec![32], 50.0).unwrap();
    // 25 frames at 50 Hz -> 50 at 100 Hz -> 25 after the output pooling
    assert_eq!(model.encode(&ModelInput::Tokens(&seq)).unwrap().shape(), &[25, 16]);
    let bad = TokenSequence::new(vec![vec![0; 25]], vec![64], 50.0).unwrap();
    assert!(model.encode(&ModelInput::Tokens(&bad)).is_err());
}

#[test]
fn save_load_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let model = AsrModel::new(tiny(InputConfig::Features { dim: 4 }, 4)).unwrap();
    model.save(dir.path()).unwrap();
    let back = AsrModel::load(dir.path()).unwrap();
    let x = Tensor::new(vec![9, 4], (0..36).map(|i| i as f64 / 36.0).collect()).unwrap();
    let a = model.log_probs(&ModelInput::Features(&x), &[1, 2]).unwrap();
    let b = back.log_probs(&ModelInput::Features(&x), &[1, 2]).unwrap();
    // parameters pass through f32 on disk
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-4);
    }
    let again = AsrModel::load(dir.path()).unwrap();
    assert_eq!(again.log_probs(&ModelInput::Features(&x), &[1, 2]).unwrap(), b);
}
