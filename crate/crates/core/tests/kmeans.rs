use ditok_core::corpus::EmbeddingSequence;
use ditok_core::tokenizer::{assign, kmeans_train, purity, Codebook, KmeansConfig, KmeansMode};
use ditok_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_scan(x: &[f32], cb: &Codebook) -> u32 {
    let mut best = (f64::INFINITY, 0u32);
    for k in 0..cb.k() {
        let d: f64 = x
            .iter()
            .zip(cb.centroid(k))
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        if d < best.0 {
            best = (d, k as u32);
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assign_matches_linear_scan(k in 1usize..12, d in 1usize..6, t in 1usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // small integer grid makes exact ties common
        let cents: Vec<f32> = (0..k * d).map(|_| rng.gen_range(-3i32..=3) as f32).collect();
        let cb = Codebook::new(cents, k, d, "syn".into()).unwrap();
        let x: Vec<f32> = (0..t * d).map(|_| rng.gen_range(-4i32..=4) as f32 * 0.5).collect();
        let seq = EmbeddingSequence::new(x.clone(), t, d, 50.0, "t").unwrap();
        let got = assign(&seq, &cb).unwrap();
        for i in 0..t {
            prop_assert_eq!(got.group(0)[i], linear_scan(&x[i * d..(i + 1) * d], &cb));
        }
    }

    #[test]
    fn lloyd_inertia_never_increases(n in 20usize..200, d in 1usize..4, k in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<f32> = (0..n * d).map(|_| rng.gen_range(-5.0f32..5.0)).collect();
        let cb = kmeans_train(&pts, d, &KmeansConfig::new(k, seed)).unwrap();
        for w in cb.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn training_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<f32> = (0..3000).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    for mode in [KmeansMode::Full, KmeansConfig::mini_batch()] {
        let cfg = KmeansConfig { mode, ..KmeansConfig::new(16, 9) };
        let a = kmeans_train(&pts, 3, &cfg).unwrap();
        let b = kmeans_train(&pts, 3, &cfg).unwrap();
        assert!(a.same_model(&b));
        assert_eq!(a.inertia_history, b.inertia_history);
    }
}

#[test]
fn separated_blobs_are_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let centres = [[0.0f32, 0.0], [20.0, 0.0], [0.0, 20.0], [20.0, 20.0]];
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..800 {
        let c = i % 4;
        pts.push(centres[c][0] + rng.gen_range(-1.0f32..1.0));
        pts.push(centres[c][1] + rng.gen_range(-1.0f32..1.0));
        labels.push(c as u32);
    }
    let cb = kmeans_train(&pts, 2, &KmeansConfig::new(8, 0)).unwrap();
    let seq = EmbeddingSequence::new(pts, 800, 2, 50.0, "t").unwrap();
    assert_eq!(purity(&assign(&seq, &cb).unwrap(), &labels).unwrap(), 1.0);
}

#[test]
fn too_few_points() {
    let err = kmeans_train(&[0.0, 1.0, 1.0], 1, &KmeansConfig::new(3, 0)).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)));
}
