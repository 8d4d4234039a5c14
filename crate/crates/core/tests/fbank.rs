use std::f64::consts::PI;

use ditok_core::fbank::{compute_fbank, hz_to_mel, mel_filterbank, mel_to_hz, num_frames, FbankConfig, FbankExtractor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(N^2) DFT magnitudes of the zero-padded frame.
fn naive_dft(frame: &[f64], n_fft: usize) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in frame.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

#[test]
fn fft_matches_naive_dft() {
    let ex = FbankExtractor::new(FbankConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let frame: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = ex.magnitude_spectrum(&frame);
        let slow = naive_dft(&frame, 512);
        assert_eq!(fast.len(), 257);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

fn sine(freq: f64, seconds: f64) -> Vec<i16> {
    (0..(16000.0 * seconds) as usize)
        .map(|i| (0.5 * 32767.0 * (2.0 * PI * freq * i as f64 / 16000.0).sin()).round() as i16)
        .collect()
}

#[test]
fn sine_peaks_at_its_frequency() {
    let cfg = FbankConfig::default();
    let ex = FbankExtractor::new(cfg.clone()).unwrap();
    let pcm = sine(1000.0, 0.1);
    let frame: Vec<f64> = pcm[..400].iter().map(|&s| s as f64 / 32768.0).collect();
    let mags = ex.magnitude_spectrum(&frame);
    let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    // 1000 Hz / (16000 / 512) = bin 32
    assert_eq!(peak, 32);

    let feats = compute_fbank(&pcm, 16000, &cfg).unwrap();
    let filters = mel_filterbank(&cfg);
    let row = &feats.frames()[..cfg.n_mels];
    let band = (0..cfg.n_mels).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    let centre = |m: usize| {
        let f = &filters[m];
        let bin = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
        bin as f64 * 16000.0 / 512.0
    };
    assert!((centre(band) - 1000.0).abs() < 100.0, "band {band} centred at {}", centre(band));
}

#[test]
fn frame_count_and_rate() {
    let cfg = FbankConfig::default();
    let feats = compute_fbank(&sine(440.0, 1.0), 16000, &cfg).unwrap();
    assert_eq!(feats.num_frames(), 1 + (16000 - 400) / 160);
    assert_eq!(feats.dim(), 80);
    assert_eq!(feats.frame_rate_hz, 100.0);
    assert!(compute_fbank(&sine(440.0, 1.0), 8000, &cfg).is_err());
    assert!(compute_fbank(&[0; 399], 16000, &cfg).is_err());
}

#[test]
fn silence_hits_the_floor() {
    let feats = compute_fbank(&[0; 1600], 16000, &FbankConfig::default()).unwrap();
    let floor = (1e-10f64).ln() as f32;
    assert!(feats.frames().iter().all(|&v| v == floor));
}

#[test]
fn filterbank_shape() {
    let cfg = FbankConfig::default();
    let fb = mel_filterbank(&cfg);
    assert_eq!(fb.len(), 80);
    let mut last_peak = 0;
    for f in &fb {
        assert_eq!(f.len(), 257);
        assert!(f.iter().all(|&w| (0.0..=1.0).contains(&w)));
        let peak = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
        assert!(peak >= last_peak);
        last_peak = peak;
    }
}

proptest! {
    #[test]
    fn mel_scale_inverts(f in 0.0f64..8000.0) {
        prop_assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-6);
    }

    #[test]
    fn frame_formula(n in 0usize..5000) {
        let expect = if n < 400 { 0 } else { 1 + (n - 400) / 160 };
        prop_assert_eq!(num_frames(n, 400, 160), expect);
    }
}
