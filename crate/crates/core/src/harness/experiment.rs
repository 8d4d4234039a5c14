use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InputMode};
use super::report::{render_table, RunReport, LangResult};
use super::schedule::resolve_schedule;
use super::synth::{audio_manifest_path, manifest_path, states_path};
use super::trainer::{aggregate, decode_examples, train, Example, ExampleInput, TrainOptions};
use crate::bpe::{bpe_train, BpeModel};
use crate::corpus::{read_embedding_file, read_manifest, read_token_file, resolve_source, total_duration_s, write_codebook, Utterance};
use crate::error::{Error, Result};
use crate::fbank::{fbank_from_wav, FbankConfig};
use crate::tokenizer::{assign, kmeans_train, purity_of, select_for_training, Codebook, KmeansConfig, SHARED_SCOPE};
use crate::transducer::{AsrModel, InputConfig, ModelConfig};

/// Manifest for `lang`/`split` in the layout the harness expects.
pub fn split_manifest(cfg: &ExperimentConfig, lang: &str, split: &str) -> PathBuf {
    match cfg.input_mode {
        InputMode::Discrete => manifest_path(&cfg.data_dir, lang, split),
        InputMode::Fbank => audio_manifest_path(&cfg.data_dir, lang, split),
    }
}

fn load_manifest(path: &Path) -> Result<Vec<Utterance>> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing manifest {}; generate data with `ditok synth` or point data_dir at <lang>/<split>.jsonl manifests",
            path.display()
        )));
    }
    read_manifest(path)
}

/// Trains one codebook per language, or a single shared one on the union
/// of the per-language samples. Returns codebooks keyed by language.
pub fn train_codebooks(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(BTreeMap<String, Codebook>, Vec<PathBuf>)> {
    let kcfg = KmeansConfig {
        k: cfg.units,
        seed: cfg.seed,
        max_iters: cfg.kmeans.max_iters,
        tol: cfg.kmeans.tol,
        mode: cfg.kmeans.mode,
        n_init: cfg.kmeans.n_init,
    };
    let mut samples = BTreeMap::new();
    for lang in &cfg.languages {
        let path = manifest_path(&cfg.data_dir, lang, "train");
        let utts = load_manifest(&path)?;
        let sel = select_for_training(&utts, cfg.kmeans.target_hours, cfg.seed);
        let mut frames = Vec::new();
        let mut dim = 0;
        for &i in &sel.indices {
            let seq = read_embedding_file(resolve_source(&path, &utts[i]))?;
            dim = seq.dim();
            frames.extend_from_slice(seq.frames());
        }
        samples.insert(lang.clone(), (frames, dim, sel.duration_s / 3600.0));
    }
    let dir = out_dir.join("codebooks");
    let mut books = BTreeMap::new();
    let mut files = Vec::new();
    if cfg.shared_kmeans {
        let mut frames = Vec::new();
        let mut dim = 0;
        let mut hours = 0.0;
        for (f, d, h) in samples.values() {
            if dim != 0 && *d != dim {
                return Err(Error::Dimension(format!("languages mix {dim}- and {d}-dim embeddings")));
            }
            dim = *d;
            frames.extend_from_slice(f);
            hours += h;
        }
        let mut cb = kmeans_train(&frames, dim, &kcfg)?;
        cb.lang_scope = SHARED_SCOPE.into();
        cb.trained_on_hours = hours;
        let file = dir.join(format!("{SHARED_SCOPE}.dscb"));
        write_codebook(&cb, &file)?;
        files.push(file);
        for lang in &cfg.languages {
            books.insert(lang.clone(), cb.clone());
        }
    } else {
        for (lang, (frames, dim, hours)) in samples {
            let mut cb = kmeans_train(&frames, dim, &kcfg)?;
            cb.lang_scope = lang.clone();
            cb.trained_on_hours = hours;
            let file = dir.join(format!("{lang}.dscb"));
            write_codebook(&cb, &file)?;
            files.push(file);
            books.insert(lang, cb);
        }
    }
    Ok((books, files))
}

/// Input side of one utterance plus, for synthetic data, its hidden states.
fn load_input(
    cfg: &ExperimentConfig,
    manifest: &Path,
    utt: &Utterance,
    codebook: Option<&Codebook>,
    fbank: &FbankConfig,
) -> Result<(ExampleInput, Option<Vec<u32>>)> {
    let src = resolve_source(manifest, utt);
    match cfg.input_mode {
        InputMode::Fbank => Ok((ExampleInput::Features(fbank_from_wav(&src, fbank)?.to_tensor()), None)),
        InputMode::Discrete => {
            let cb = codebook.expect("discrete mode has codebooks");
            let seq = read_embedding_file(&src)?;
            let tokens = assign(&seq, cb)?;
            let truth = states_path(&src);
            let states = if truth.exists() {
                Some(read_token_file(&truth)?.group(0).to_vec())
            } else {
                None
            };
            Ok((ExampleInput::Tokens(tokens), states))
        }
    }
}

struct Split {
    examples: Vec<Example>,
    duration_s: f64,
    /// Per language: assigned tokens and hidden states, when known.
    states: BTreeMap<String, (Vec<u32>, Vec<u32>)>,
}

fn load_split(
    cfg: &ExperimentConfig,
    langs: &[String],
    split: &str,
    books: &BTreeMap<String, Codebook>,
    bpe: Option<&BpeModel>,
) -> Result<Split> {
    let fbank = FbankConfig::default();
    let mut examples = Vec::new();
    let mut duration_s = 0.0;
    let mut states: BTreeMap<String, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
    for lang in langs {
        let path = split_manifest(cfg, lang, split);
        let utts = load_manifest(&path)?;
        duration_s += total_duration_s(&utts);
        let loaded: Vec<Result<(ExampleInput, Option<Vec<u32>>)>> = utts
            .par_iter()
            .map(|u| load_input(cfg, &path, u, books.get(lang), &fbank))
            .collect();
        for (u, r) in utts.iter().zip(loaded) {
            let (input, truth) = r?;
            if let (Some(truth), ExampleInput::Tokens(t)) = (truth, &input) {
                let entry = states.entry(lang.clone()).or_default();
                entry.0.extend_from_slice(t.group(0));
                entry.1.extend(truth);
            }
            examples.push(Example {
                utt_id: u.utt_id.clone(),
                lang: lang.clone(),
                text: u.text.clone(),
                labels: bpe.map(|b| b.encode(&u.text)).unwrap_or_default(),
                input,
            });
        }
    }
    Ok(Split {
        examples,
        duration_s,
        states,
    })
}

fn label_examples(examples: &mut [Example], bpe: &BpeModel) {
    for ex in examples {
        ex.labels = bpe.encode(&ex.text);
    }
}

pub fn model_config(cfg: &ExperimentConfig, vocab_size: usize) -> ModelConfig {
    let (input, dim) = match cfg.input_mode {
        InputMode::Fbank => {
            let n = FbankConfig::default().n_mels;
            (InputConfig::Features { dim: n }, n)
        }
        InputMode::Discrete => (
            InputConfig::Tokens {
                codebook_sizes: vec![cfg.units as u32],
                frontend: cfg.frontend.clone(),
            },
            cfg.frontend.dim,
        ),
    };
    ModelConfig {
        input,
        encoder: cfg.model.encoder(dim),
        predictor: cfg.model.predictor(),
        joint: cfg.model.joint(),
        vocab_size,
        seed: cfg.seed,
    }
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub reports: Vec<RunReport>,
    pub codebook_files: Vec<PathBuf>,
    pub table: String,
}

/// tokenize (discrete mode) → BPE → train → decode → score, once for the
/// union of languages with `mix_data`, otherwise once per language.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out_dir = cfg.out_dir.join(&cfg.name);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let (books, codebook_files) = match cfg.input_mode {
        InputMode::Discrete => train_codebooks(cfg, &out_dir)?,
        InputMode::Fbank => (BTreeMap::new(), Vec::new()),
    };
    let groups: Vec<Vec<String>> = if cfg.mix_data {
        vec![cfg.languages.clone()]
    } else {
        cfg.languages.iter().map(|l| vec![l.clone()]).collect()
    };
    let mut reports = Vec::with_capacity(groups.len());
    for langs in groups {
        let run_name = if langs.len() == 1 { langs[0].clone() } else { "mix".to_string() };
        let run_dir = out_dir.join(&run_name);
        reports.push(run_group(cfg, &langs, &books, &codebook_files, &run_dir)?);
    }
    let table = render_table(&[(cfg.name.clone(), reports.clone())], &cfg.languages);
    let out = ExperimentOutput {
        reports,
        codebook_files,
        table,
    };
    super::report::write_text(&out_dir.join("table.txt"), &out.table)?;
    super::report::write_json(&out_dir.join("reports.json"), &out.reports)?;
    Ok(out)
}

fn run_group(
    cfg: &ExperimentConfig,
    langs: &[String],
    books: &BTreeMap<String, Codebook>,
    codebook_files: &[PathBuf],
    run_dir: &Path,
) -> Result<RunReport> {
    let mut train_split = load_split(cfg, langs, "train", books, None)?;
    let texts: Vec<&str> = train_split.examples.iter().map(|e| e.text.as_str()).collect();
    let bpe = bpe_train(&texts, cfg.bpe_target())?;
    label_examples(&mut train_split.examples, &bpe);
    let dev = load_split(cfg, langs, "dev", books, Some(&bpe))?;
    let test = load_split(cfg, langs, "test", books, Some(&bpe))?;

    let schedule = resolve_schedule(train_split.duration_s, cfg.epochs.value(), cfg.lr.value())?;
    let mut model = AsrModel::new(model_config(cfg, bpe.vocab_size()))?;
    let opts = TrainOptions {
        epochs: schedule.epochs,
        lr: schedule.lr,
        batch_size: cfg.train.batch_size,
        max_grad_norm: cfg.train.max_grad_norm,
        seed: cfg.seed,
        augment: cfg.augment.clone(),
        spec_augment: cfg.spec_augment.clone(),
        early_stop_wer: cfg.train.early_stop_wer,
        eval_every: cfg.train.eval_every,
        beam: cfg.train.beam,
        divergence_window: cfg.train.divergence_window,
        divergence_factor: cfg.train.divergence_factor,
    };
    log::info!(
        "training on {} ({} utterances, {:.3} h, vocab {}, {} params, lr {:.2e}, <= {} epochs)",
        langs.join("+"),
        train_split.examples.len(),
        train_split.duration_s / 3600.0,
        bpe.vocab_size(),
        model.num_params(),
        schedule.lr,
        schedule.epochs
    );
    let outcome = train(&mut model, &train_split.examples, &dev.examples, &bpe, &opts)?;

    let dev_out = decode_examples(&model, &dev.examples, &bpe, cfg.train.beam)?;
    let test_out = decode_examples(&model, &test.examples, &bpe, cfg.train.beam)?;
    let results = langs
        .iter()
        .map(|lang| {
            let pick = |v: &[super::trainer::DecodeOutput]| {
                aggregate(&v.iter().filter(|o| &o.lang == lang).cloned().collect::<Vec<_>>())
            };
            let purity = train_split
                .states
                .get(lang)
                .and_then(|(tokens, truth)| purity_of(tokens, truth).ok());
            LangResult {
                lang: lang.clone(),
                dev: pick(&dev_out),
                test: pick(&test_out),
                purity,
            }
        })
        .collect();

    let mean_frames = if train_split.examples.is_empty() {
        0.0
    } else {
        train_split
            .examples
            .iter()
            .map(|e| model.input_frames(&e.model_input()).unwrap_or(0) as f64)
            .sum::<f64>()
            / train_split.examples.len() as f64
    };
    let report = RunReport {
        name: cfg.name.clone(),
        config_hash: cfg.config_hash(),
        input_mode: cfg.input_mode,
        mix_data: cfg.mix_data,
        shared_kmeans: cfg.shared_kmeans,
        units: cfg.units,
        bpe_vocab: bpe.vocab_size(),
        languages: langs.to_vec(),
        results,
        epochs: outcome.epochs,
        loss_curve: outcome.step_losses,
        total_params: model.num_params(),
        lr: schedule.lr,
        codebook_files: codebook_files.iter().map(|p| p.display().to_string()).collect(),
        mean_encoder_input_frames: mean_frames,
    };

    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    model.save(run_dir)?;
    bpe.save(run_dir.join("bpe.json"))?;
    super::report::write_json(&run_dir.join("report.json"), &report)?;
    let lines: Vec<String> = dev_out
        .iter()
        .chain(&test_out)
        .map(|o| serde_json::to_string(o).expect("serializable"))
        .collect();
    super::report::write_text(&run_dir.join("decode.jsonl"), &(lines.join("\n") + "\n"))?;
    Ok(report)
}

/// Model input for one manifest entry, chosen by file extension: `.wav`
/// goes through fbank, `.dstk` is used as is, and `.dsem` is either a
/// feature matrix or, for a token-input model, quantized with `codebook`.
pub fn load_model_input(model: &AsrModel, manifest: &Path, utt: &Utterance, codebook: Option<&Codebook>) -> Result<ExampleInput> {
    let src = resolve_source(manifest, utt);
    let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("");
    let wants_tokens = matches!(model.config.input, InputConfig::Tokens { .. });
    match (ext, wants_tokens) {
        ("wav", false) => Ok(ExampleInput::Features(fbank_from_wav(&src, &FbankConfig::default())?.to_tensor())),
        ("dsem", false) => Ok(ExampleInput::Features(read_embedding_file(&src)?.to_tensor())),
        ("dstk", true) => Ok(ExampleInput::Tokens(read_token_file(&src)?)),
        ("dsem", true) => {
            let cb = codebook.ok_or_else(|| {
                Error::Config(format!("{} holds embeddings; pass a codebook to quantize them", src.display()))
            })?;
            Ok(ExampleInput::Tokens(assign(&read_embedding_file(&src)?, cb)?))
        }
        _ => Err(Error::Config(format!(
            "cannot feed {} to a {} model",
            src.display(),
            if wants_tokens { "token-input" } else { "feature-input" }
        ))),
    }
}
