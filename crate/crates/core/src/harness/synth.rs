//! Synthetic corpora: a hidden Markov chain over a few states, one
//! Gaussian cluster per state, and one word per run of a state.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::utterance_seed;
use crate::corpus::{wav, write_embedding_file, write_manifest, write_token_file, EmbeddingSequence, TokenSequence, Utterance};
use crate::error::{Error, Result};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];
pub const AUDIO_RATE: u32 = 16000;
pub const SYNTH_TAG: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lang: String,
    pub n_utts: usize,
    pub k_true: usize,
    pub dim: usize,
    pub frame_rate_hz: f32,
    pub sigma: f64,
    /// Minimum centroid distance in units of `sigma`.
    pub separation: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Shortest run of one state, in frames.
    pub min_run: usize,
    /// Mean extra run length beyond `min_run` (geometric).
    pub mean_extra_run: f64,
    /// Also write 16 kHz tone audio for the fbank path.
    pub audio: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lang: "syn".into(),
            n_utts: 200,
            k_true: 5,
            dim: 16,
            frame_rate_hz: 50.0,
            sigma: 1.0,
            separation: 8.0,
            min_frames: 200,
            max_frames: 300,
            min_run: 8,
            mean_extra_run: 6.0,
            audio: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_true < 2 || self.dim == 0 {
            return Err(Error::Config("synthetic corpus needs K_true >= 2 and D >= 1".into()));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames || self.min_run == 0 {
            return Err(Error::Config(format!(
                "invalid frame bounds [{}, {}] / min run {}",
                self.min_frames, self.max_frames, self.min_run
            )));
        }
        if !(self.frame_rate_hz > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config("frame rate and sigma must be positive".into()));
        }
        if self.audio && (AUDIO_RATE as f32 / self.frame_rate_hz).fract() != 0.0 {
            return Err(Error::Config(format!(
                "audio needs a frame rate dividing {AUDIO_RATE} Hz, got {}",
                self.frame_rate_hz
            )));
        }
        Ok(())
    }
}

/// Layout of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub lang: String,
    pub root: PathBuf,
    /// `(split, manifest path, utterance count)`.
    pub manifests: Vec<(String, PathBuf, usize)>,
    pub centroids: Vec<Vec<f64>>,
    pub words: Vec<String>,
}

impl SynthCorpus {
    pub fn manifest(&self, split: &str) -> Option<&Path> {
        self.manifests.iter().find(|m| m.0 == split).map(|m| m.1.as_path())
    }
}

pub fn manifest_path(data_dir: &Path, lang: &str, split: &str) -> PathBuf {
    data_dir.join(lang).join(format!("{split}.jsonl"))
}

pub fn audio_manifest_path(data_dir: &Path, lang: &str, split: &str) -> PathBuf {
    data_dir.join(lang).join(format!("{split}.audio.jsonl"))
}

/// Path of the hidden state sequence stored next to an embedding file.
pub fn states_path(dsem: &Path) -> PathBuf {
    dsem.with_extension("states.dstk")
}

/// Pronounceable pseudo-words, distinct per state and language.
pub fn state_words(lang: &str, k: usize) -> Vec<String> {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed(0x5eed, lang, 0));
    let mut words: Vec<String> = Vec::with_capacity(k);
    while words.len() < k {
        let syll = rng.gen_range(2..=3);
        let w: String = (0..syll)
            .map(|_| format!("{}{}", ONSETS[rng.gen_range(0..12)], VOWELS[rng.gen_range(0..5)]))
            .collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Random centroids rescaled so that the closest pair is `min_dist` apart.
fn centroids(rng: &mut impl Rng, k: usize, dim: usize, min_dist: f64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let c: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| normal.sample(rng)).collect()).collect();
        let mut closest = f64::INFINITY;
        for i in 0..k {
            for j in i + 1..k {
                let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                closest = closest.min(d);
            }
        }
        if closest > 1e-6 {
            let s = min_dist / closest;
            return c.into_iter().map(|v| v.into_iter().map(|x| x * s).collect()).collect();
        }
    }
}

fn state_path(rng: &mut impl Rng, cfg: &SynthConfig, frames: usize) -> Vec<u32> {
    let mut states = Vec::with_capacity(frames);
    let mut cur = rng.gen_range(0..cfg.k_true as u32);
    let p_stop = 1.0 / (1.0 + cfg.mean_extra_run.max(0.0));
    while states.len() < frames {
        let mut run = cfg.min_run;
        while !rng.gen_bool(p_stop) {
            run += 1;
        }
        states.extend(std::iter::repeat(cur).take(run));
        let next = rng.gen_range(0..cfg.k_true as u32 - 1);
        cur = if next >= cur { next + 1 } else { next };
    }
    // A trailing run shorter than `min_run` is absorbed by the previous one.
    states.truncate(frames);
    let last = *states.last().unwrap();
    let tail = states.iter().rev().take_while(|&&s| s == last).count();
    if tail < cfg.min_run && tail < states.len() {
        let prev = states[states.len() - tail - 1];
        let n = states.len();
        states[n - tail..].fill(prev);
    }
    states
}

/// Word sequence for a state path: one word per run.
pub fn transcript(states: &[u32], words: &[String]) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut prev = None;
    for &s in states {
        if prev != Some(s) {
            out.push(&words[s as usize]);
            prev = Some(s);
        }
    }
    out.join(" ")
}

fn tone(states: &[u32], samples_per_frame: usize, rng: &mut impl Rng) -> Vec<i16> {
    let noise = Normal::new(0.0, 300.0).unwrap();
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(states.len() * samples_per_frame);
    for &s in states {
        let f = 300.0 + 450.0 * s as f64;
        for _ in 0..samples_per_frame {
            phase += 2.0 * std::f64::consts::PI * f / AUDIO_RATE as f64;
            let v = 9000.0 * phase.sin() + noise.sample(rng);
            out.push(v.clamp(-32768.0, 32767.0) as i16);
        }
    }
    out
}

/// Writes `<root>/<lang>/{train,dev,test}.jsonl` (plus `.audio.jsonl` with
/// `audio = true`), one DSEM per utterance and its hidden state sequence.
/// Splits take 80/10/10 percent of `n_utts`.
pub fn make_synthetic_corpus(cfg: &SynthConfig, root: impl AsRef<Path>) -> Result<SynthCorpus> {
    cfg.validate()?;
    let root = root.as_ref();
    let lang_dir = root.join(&cfg.lang);
    let data_dir = lang_dir.join("data");
    std::fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed(cfg.seed, &cfg.lang, 0));
    let cents = centroids(&mut rng, cfg.k_true, cfg.dim, cfg.separation * cfg.sigma);
    let words = state_words(&cfg.lang, cfg.k_true);
    let noise = Normal::new(0.0, cfg.sigma).unwrap();

    let n_dev = cfg.n_utts / 10;
    let n_test = cfg.n_utts / 10;
    let n_train = cfg.n_utts - n_dev - n_test;
    let mut split_utts: Vec<(Vec<Utterance>, Vec<Utterance>)> = vec![(Vec::new(), Vec::new()); 3];
    for i in 0..cfg.n_utts {
        let split = if i < n_train {
            0
        } else if i < n_train + n_dev {
            1
        } else {
            2
        };
        let frames = rng.gen_range(cfg.min_frames..=cfg.max_frames);
        let states = state_path(&mut rng, cfg, frames);
        let mut data = Vec::with_capacity(frames * cfg.dim);
        for &s in &states {
            data.extend(cents[s as usize].iter().map(|c| (c + noise.sample(&mut rng)) as f32));
        }
        let id = format!("{}-{}-{i:05}", cfg.lang, SPLITS[split]);
        let dsem = data_dir.join(format!("{id}.dsem"));
        let seq = EmbeddingSequence::new(data, frames, cfg.dim, cfg.frame_rate_hz, SYNTH_TAG)?;
        write_embedding_file(&seq, &dsem)?;
        let truth = TokenSequence::new(vec![states.clone()], vec![cfg.k_true as u32], cfg.frame_rate_hz)?;
        write_token_file(&truth, states_path(&dsem))?;
        let duration_s = frames as f64 / cfg.frame_rate_hz as f64;
        let text = transcript(&states, &words);
        split_utts[split].0.push(Utterance {
            utt_id: id.clone(),
            lang: cfg.lang.clone(),
            source_path: format!("data/{id}.dsem"),
            text: text.clone(),
            duration_s,
        });
        if cfg.audio {
            let spf = (AUDIO_RATE as f32 / cfg.frame_rate_hz) as usize;
            let pcm = tone(&states, spf, &mut rng);
            wav::write_pcm16(data_dir.join(format!("{id}.wav")), &pcm, AUDIO_RATE)?;
            split_utts[split].1.push(Utterance {
                utt_id: id.clone(),
                lang: cfg.lang.clone(),
                source_path: format!("data/{id}.wav"),
                text,
                duration_s: pcm.len() as f64 / AUDIO_RATE as f64,
            });
        }
    }

    let mut manifests = Vec::new();
    for (split, (emb, audio)) in SPLITS.iter().zip(&split_utts) {
        let path = manifest_path(root, &cfg.lang, split);
        write_manifest(&path, emb)?;
        if cfg.audio {
            write_manifest(audio_manifest_path(root, &cfg.lang, split), audio)?;
        }
        manifests.push((split.to_string(), path, emb.len()));
    }
    Ok(SynthCorpus {
        lang: cfg.lang.clone(),
        root: root.to_path_buf(),
        manifests,
        centroids: cents,
        words,
    })
}
