//! 80-channel log-mel filterbank features and SpecAugment.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::{wav, EmbeddingSequence};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;
pub const FBANK_TAG: &str = "fbank80";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbankConfig {
    pub sample_rate_hz: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_fft: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16000,
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 80,
            n_fft: 512,
            fmin: 20.0,
            fmax: None,
        }
    }
}

impl FbankConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate_hz as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate_hz as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn fmax_hz(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate_hz as f64 / 2.0)
    }

    pub fn frame_rate_hz(&self) -> f32 {
        (1000.0 / self.hop_ms) as f32
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz != 16000 {
            return Err(Error::Config(format!(
                "only 16 kHz audio is supported, got {} Hz",
                self.sample_rate_hz
            )));
        }
        let win = self.window_samples();
        if win == 0 || win > self.n_fft {
            return Err(Error::Config(format!(
                "window of {win} samples does not fit n_fft = {}",
                self.n_fft
            )));
        }
        if self.hop_samples() == 0 {
            return Err(Error::Config("hop must be at least one sample".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax_hz()) {
            return Err(Error::Config(format!(
                "need 0 <= fmin < fmax, got {} and {}",
                self.fmin,
                self.fmax_hz()
            )));
        }
        Ok(())
    }
}

/// Frames produced for `n` samples: `1 + ⌊(n − win)/hop⌋`, or 0 when `n < win`.
pub fn num_frames(n: usize, win: usize, hop: usize) -> usize {
    if n < win {
        0
    } else {
        1 + (n - win) / hop
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Triangular filters on the HTK mel scale, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(cfg: &FbankConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax_hz()));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - l) / (c - l);
                    let down = (r - f) / (r - c);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reusable FFT plan, window and filterbank.
pub struct FbankExtractor {
    cfg: FbankConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl FbankExtractor {
    pub fn new(cfg: FbankConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            window: hamming(cfg.window_samples()),
            filters: mel_filterbank(&cfg),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &FbankConfig {
        &self.cfg
    }

    /// Magnitudes of the first `n_fft/2 + 1` bins of the zero-padded frame.
    pub fn magnitude_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.cfg.n_fft];
        for (b, v) in buf.iter_mut().zip(frame) {
            b.re = *v;
        }
        self.fft.process(&mut buf);
        buf[..self.cfg.n_fft / 2 + 1].iter().map(|c| c.norm()).collect()
    }

    pub fn log_mel(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(magnitudes).map(|(w, m)| w * m).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect()
    }

    /// Samples are scaled to `[-1, 1)` before windowing.
    pub fn compute(&self, pcm: &[i16]) -> Result<EmbeddingSequence> {
        let win = self.cfg.window_samples();
        let hop = self.cfg.hop_samples();
        let t = num_frames(pcm.len(), win, hop);
        if t == 0 {
            return Err(Error::Length(format!(
                "{} samples is shorter than one {win}-sample window",
                pcm.len()
            )));
        }
        let mut out = Vec::with_capacity(t * self.cfg.n_mels);
        let mut frame = vec![0.0; win];
        for i in 0..t {
            for (j, f) in frame.iter_mut().enumerate() {
                *f = pcm[i * hop + j] as f64 / 32768.0 * self.window[j];
            }
            let mags = self.magnitude_spectrum(&frame);
            out.extend(self.log_mel(&mags).into_iter().map(|v| v as f32));
        }
        EmbeddingSequence::new(out, t, self.cfg.n_mels, self.cfg.frame_rate_hz(), FBANK_TAG)
    }
}

/// Log-mel features of 16-bit mono PCM.
pub fn compute_fbank(pcm: &[i16], sample_rate_hz: u32, cfg: &FbankConfig) -> Result<EmbeddingSequence> {
    if sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::Config(format!(
            "audio declares {sample_rate_hz} Hz, extractor expects {} Hz",
            cfg.sample_rate_hz
        )));
    }
    FbankExtractor::new(cfg.clone())?.compute(pcm)
}

pub fn fbank_from_wav(path: impl AsRef<Path>, cfg: &FbankConfig) -> Result<EmbeddingSequence> {
    let (pcm, rate) = wav::read_pcm16(path)?;
    compute_fbank(&pcm, rate, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecAugmentConfig {
    pub time_masks: usize,
    pub max_t: usize,
    pub freq_masks: usize,
    pub max_f: usize,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        Self {
            time_masks: 2,
            max_t: 40,
            freq_masks: 2,
            max_f: 15,
        }
    }
}

/// A sampled span `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub width: usize,
}

pub(crate) fn sample_span(rng: &mut impl Rng, len: usize, max_width: usize) -> Span {
    let width = rng.gen_range(0..=max_width.min(len));
    let start = rng.gen_range(0..=len - width);
    Span { start, width }
}

/// Zero-fill time and frequency masking; returns the masked copy plus the
/// sampled `(time spans, frequency bands)`.
pub fn spec_augment_with_spans(
    feat: &EmbeddingSequence,
    cfg: &SpecAugmentConfig,
    seed: u64,
) -> (EmbeddingSequence, Vec<Span>, Vec<Span>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, d) = (feat.num_frames(), feat.dim());
    let times: Vec<Span> = (0..cfg.time_masks).map(|_| sample_span(&mut rng, t, cfg.max_t)).collect();
    let bands: Vec<Span> = (0..cfg.freq_masks).map(|_| sample_span(&mut rng, d, cfg.max_f)).collect();
    let mut data = feat.frames().to_vec();
    for s in &times {
        data[s.start * d..(s.start + s.width) * d].fill(0.0);
    }
    for b in &bands {
        for row in data.chunks_mut(d) {
            row[b.start..b.start + b.width].fill(0.0);
        }
    }
    let out = EmbeddingSequence::new(data, t, d, feat.frame_rate_hz, feat.source_tag.clone())
        .expect("masking keeps a valid shape");
    (out, times, bands)
}

pub fn spec_augment(feat: &EmbeddingSequence, cfg: &SpecAugmentConfig, seed: u64) -> EmbeddingSequence {
    spec_augment_with_spans(feat, cfg, seed).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_gives_98_frames() {
        let pcm: Vec<i16> = (0..16000).map(|i| ((i * 37) % 2001) as i16 - 1000).collect();
        let f = compute_fbank(&pcm, 16000, &FbankConfig::default()).unwrap();
        assert_eq!((f.num_frames(), f.dim()), (98, 80));
        assert_eq!(f.frame_rate_hz, 100.0);
        assert_eq!(f.source_tag, FBANK_TAG);
    }

    #[test]
    fn silence_hits_log_floor() {
        let f = compute_fbank(&[0; 800], 16000, &FbankConfig::default()).unwrap();
        let floor = LOG_FLOOR.ln() as f32;
        assert!(f.frames().iter().all(|v| *v == floor));
    }

    #[test]
    fn short_input_and_wrong_rate() {
        let cfg = FbankConfig::default();
        assert!(matches!(compute_fbank(&[0; 399], 16000, &cfg), Err(Error::Length(_))));
        assert!(matches!(compute_fbank(&[0; 800], 8000, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn filters_peak_at_centres() {
        let cfg = FbankConfig::default();
        let fb = mel_filterbank(&cfg);
        assert_eq!(fb.len(), 80);
        assert!(fb.iter().all(|f| f.len() == 257 && f.iter().all(|w| (0.0..=1.0).contains(w))));
        assert!(fb.iter().all(|f| f.iter().any(|w| *w > 0.0)));
    }

    #[test]
    fn mel_round_trip() {
        for f in [0.0, 20.0, 700.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn spec_augment_cases() {
        let data: Vec<f32> = (0..50 * 80).map(|i| 1.0 + i as f32).collect();
        let feat = EmbeddingSequence::new(data, 50, 80, 100.0, "x").unwrap();
        let none = SpecAugmentConfig { time_masks: 0, freq_masks: 0, ..Default::default() };
        assert_eq!(spec_augment(&feat, &none, 3).frames(), feat.frames());

        let wide = SpecAugmentConfig { max_t: 50, ..Default::default() };
        let (a, times, bands) = spec_augment_with_spans(&feat, &wide, 11);
        assert_eq!((a.num_frames(), a.dim()), (50, 80));
        assert_eq!(spec_augment(&feat, &wide, 11).frames(), a.frames());
        for ti in 0..50 {
            for c in 0..80 {
                let masked = times.iter().any(|s| (s.start..s.start + s.width).contains(&ti))
                    || bands.iter().any(|b| (b.start..b.start + b.width).contains(&c));
                let v = a.frame(ti)[c];
                if masked {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, feat.frame(ti)[c]);
                }
            }
        }
    }
}
