use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use ditok_core::bpe::{bpe_train, BpeModel};
use ditok_core::corpus::{
    read_codebook, read_embedding_file, read_manifest, resolve_source, write_codebook, write_embedding_file,
    write_manifest, write_token_file, Utterance,
};
use ditok_core::decode::{wer_text, WerStats};
use ditok_core::fbank::{fbank_from_wav, FbankConfig};
use ditok_core::harness::config::{ExperimentConfig, SEED_ENV};
use ditok_core::harness::experiment::load_model_input;
use ditok_core::harness::report::{
    ablation_rows, read_reports, render_ablation, render_table, render_timing, timing_report, write_json,
    write_text, LangResult, RunReport,
};
use ditok_core::harness::synth::{make_synthetic_corpus, manifest_path, SynthConfig};
use ditok_core::harness::trainer::{decode_examples, Example};
use ditok_core::harness::run_experiment;
use ditok_core::tokenizer::{
    assign, kmeans_train, subsample_for_training, FrameSample, KmeansConfig, KmeansMode, SHARED_SCOPE,
};
use ditok_core::transducer::AsrModel;
use ditok_core::{Error, Result};

/// Discrete-token speech recognition workbench.
#[derive(Parser)]
#[command(name = "ditok", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (DSEM + hidden states + manifests).
    Synth(SynthArgs),
    /// Compute 80-dim log-mel fbank DSEM files for an audio manifest.
    Fbank(FbankArgs),
    /// Train a k-means codebook on embedding frames.
    KmeansTrain(KmeansArgs),
    /// Quantize DSEM files into DSTK token files.
    Tokenize(TokenizeArgs),
    /// Train a BPE model on manifest transcripts.
    BpeTrain(BpeArgs),
    /// Run an experiment config end to end (tokenize, BPE, train, decode, score).
    Train(ConfigArgs),
    /// Alias of `train`.
    Run(ConfigArgs),
    /// Decode a manifest with a trained run directory; prints JSON lines.
    Decode(DecodeArgs),
    /// Score decode output against manifest references.
    Score(ScoreArgs),
    /// Render WER, ablation and timing tables from report JSON files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "syn")]
    lang: String,
    #[arg(long, default_value_t = 200)]
    utts: usize,
    #[arg(long, default_value_t = 5)]
    k_true: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 50.0)]
    frame_rate: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write 16 kHz audio and `.audio.jsonl` manifests.
    #[arg(long)]
    audio: bool,
}

#[derive(Args)]
struct FbankArgs {
    /// Manifest whose sources are 16 kHz WAV files.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct KmeansArgs {
    #[arg(long)]
    units: usize,
    /// A language code, or `shared` for the union of `--langs`.
    #[arg(long)]
    lang: String,
    /// Languages pooled by `--lang shared`.
    #[arg(long, value_delimiter = ',')]
    langs: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    hours: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory holding `<lang>/train.jsonl`.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Independent restarts; the lowest-inertia run wins.
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// Use mini-batch updates (batch 4096, 10 epochs).
    #[arg(long)]
    mini_batch: bool,
}

#[derive(Args)]
struct TokenizeArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Receives `<utt_id>.dstk` files and `manifest.jsonl`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BpeArgs {
    #[arg(long, default_value_t = 500)]
    size: usize,
    #[arg(long, required = true, num_args = 1..)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Directory with model.json, model.dscp and bpe.json.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Codebook for token-input models fed with DSEM embeddings.
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Reference manifests.
    #[arg(long, required = true, num_args = 1..)]
    manifest: Vec<PathBuf>,
    /// JSON lines with utt_id and hyp_text.
    #[arg(long)]
    hyps: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// reports.json or report.json files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        lang: a.lang,
        n_utts: a.utts,
        k_true: a.k_true,
        dim: a.dim,
        frame_rate_hz: a.frame_rate,
        audio: a.audio,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let corpus = make_synthetic_corpus(&cfg, &a.out)?;
    for (split, path, n) in &corpus.manifests {
        println!("{split}\t{n}\t{}", path.display());
    }
    Ok(())
}

fn fbank(a: FbankArgs) -> Result<()> {
    let utts = read_manifest(&a.manifest)?;
    let cfg = FbankConfig::default();
    let out: Vec<Result<Utterance>> = utts
        .par_iter()
        .map(|u| {
            let seq = fbank_from_wav(resolve_source(&a.manifest, u), &cfg)?;
            let name = format!("{}.dsem", u.utt_id);
            write_embedding_file(&seq, a.out_dir.join(&name))?;
            Ok(Utterance {
                source_path: name,
                ..u.clone()
            })
        })
        .collect();
    let out = out.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = a.out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &out)?;
    println!("{} utterances -> {}", out.len(), manifest.display());
    Ok(())
}

fn kmeans(a: KmeansArgs) -> Result<()> {
    let langs = if a.lang == SHARED_SCOPE {
        if a.langs.is_empty() {
            return Err(Error::Config("--lang shared needs --langs a,b,...".into()));
        }
        a.langs.clone()
    } else {
        vec![a.lang.clone()]
    };
    let mut sample: Option<FrameSample> = None;
    for lang in &langs {
        let s = subsample_for_training(manifest_path(&a.data_dir, lang, "train"), a.hours, a.seed)?;
        if let Some(w) = &s.warning {
            log::warn!("{lang}: {w}");
        }
        match &mut sample {
            Some(acc) => acc.extend(s)?,
            None => sample = Some(s),
        }
    }
    let sample = sample.expect("at least one language");
    let cfg = KmeansConfig {
        k: a.units,
        seed: a.seed,
        max_iters: a.max_iters,
        tol: a.tol,
        mode: if a.mini_batch { KmeansConfig::mini_batch() } else { KmeansMode::Full },
        n_init: a.n_init,
    };
    let mut cb = kmeans_train(&sample.frames, sample.dim, &cfg)?;
    cb.lang_scope = a.lang.clone();
    cb.trained_on_hours = sample.hours();
    write_codebook(&cb, &a.out)?;
    println!(
        "K={} D={} on {} frames ({:.3} h), inertia {:.6} -> {}",
        cb.k(),
        cb.dim(),
        sample.num_frames(),
        sample.hours(),
        cb.inertia_history.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn tokenize(a: TokenizeArgs) -> Result<()> {
    let cb = read_codebook(&a.codebook)?;
    let utts = read_manifest(&a.manifest)?;
    let out: Vec<Result<Utterance>> = utts
        .par_iter()
        .map(|u| {
            let tokens = assign(&read_embedding_file(resolve_source(&a.manifest, u))?, &cb)?;
            let name = format!("{}.dstk", u.utt_id);
            write_token_file(&tokens, a.out_dir.join(&name))?;
            Ok(Utterance {
                source_path: name,
                ..u.clone()
            })
        })
        .collect();
    let out = out.into_iter().collect::<Result<Vec<_>>>()?;
    write_manifest(a.out_dir.join("manifest.jsonl"), &out)?;
    println!("{} utterances tokenized", out.len());
    Ok(())
}

fn bpe(a: BpeArgs) -> Result<()> {
    let mut texts = Vec::new();
    for m in &a.manifest {
        texts.extend(read_manifest(m)?.into_iter().map(|u| u.text));
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let model = bpe_train(&refs, a.size)?;
    model.save(&a.out)?;
    println!("vocab {} ({} merges) -> {}", model.vocab_size(), model.merges.len(), a.out.display());
    Ok(())
}

fn run(a: ConfigArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = run_experiment(&cfg)?;
    print!("{}", out.table);
    Ok(())
}

#[derive(Serialize)]
struct DecodeLine<'a> {
    utt_id: &'a str,
    hyp_text: &'a str,
    log_score: f64,
}

fn decode(a: DecodeArgs) -> Result<()> {
    let model = AsrModel::load(&a.run_dir)?;
    let bpe = BpeModel::load(a.run_dir.join("bpe.json"))?;
    let cb = a.codebook.as_ref().map(read_codebook).transpose()?;
    let utts = read_manifest(&a.manifest)?;
    let examples = utts
        .iter()
        .map(|u| {
            Ok(Example {
                utt_id: u.utt_id.clone(),
                lang: u.lang.clone(),
                text: u.text.clone(),
                labels: Vec::new(),
                input: load_model_input(&model, &a.manifest, u, cb.as_ref())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lines: Vec<String> = decode_examples(&model, &examples, &bpe, a.beam)?
        .iter()
        .map(|o| {
            serde_json::to_string(&DecodeLine {
                utt_id: &o.utt_id,
                hyp_text: &o.hyp_text,
                log_score: o.log_score,
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    let text = lines.join("\n") + "\n";
    match a.out {
        Some(p) => write_text(&p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.hyps).map_err(|e| Error::io(&a.hyps, e))?;
    let mut hyps = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let field = |k: &str| {
            v.get(k).and_then(|x| x.as_str()).map(str::to_string).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("missing string field {k:?}"),
            })
        };
        hyps.insert(field("utt_id")?, field("hyp_text")?);
    }
    let mut per_lang: BTreeMap<String, WerStats> = BTreeMap::new();
    for m in &a.manifest {
        for u in read_manifest(m)? {
            let hyp = hyps
                .get(&u.utt_id)
                .ok_or_else(|| Error::Validation(format!("no hypothesis for {}", u.utt_id)))?;
            per_lang.entry(u.lang.clone()).or_default().add(&wer_text(&u.text, hyp));
        }
    }
    let results: Vec<LangResult> = per_lang
        .iter()
        .map(|(lang, s)| LangResult {
            lang: lang.clone(),
            dev: *s,
            test: *s,
            purity: None,
        })
        .collect();
    let width = 10;
    let header: Vec<String> = ["lang", "words", "sub", "del", "ins", "WER %"]
        .iter()
        .map(|h| format!("{h:>width$}"))
        .collect();
    let mut out = header.join(" ") + "\n";
    let mut total = WerStats::default();
    for (lang, s) in &per_lang {
        total.add(s);
        out.push_str(&row(lang, s, width));
    }
    out.push_str(&row("all", &total, width));
    print!("{out}");
    if let Some(p) = a.json {
        write_json(&p, &results)?;
    }
    Ok(())
}

fn row(label: &str, s: &WerStats, width: usize) -> String {
    format!(
        "{label:>width$} {:>width$} {:>width$} {:>width$} {:>width$} {:>width$.2}\n",
        s.ref_words,
        s.substitutions,
        s.deletions,
        s.insertions,
        100.0 * s.wer()
    )
}

fn report(a: ReportArgs) -> Result<()> {
    let mut all: Vec<RunReport> = Vec::new();
    for p in &a.reports {
        all.extend(read_reports(p)?);
    }
    let mut languages: Vec<String> = Vec::new();
    for r in &all {
        for l in &r.languages {
            if !languages.contains(l) {
                languages.push(l.clone());
            }
        }
    }
    let mut systems: Vec<(String, Vec<RunReport>)> = Vec::new();
    for r in &all {
        let label = format!("{} ({})", r.name, r.input_mode.as_str());
        match systems.iter_mut().find(|s| s.0 == label) {
            Some(s) => s.1.push(r.clone()),
            None => systems.push((label, vec![r.clone()])),
        }
    }
    let timing = timing_report(&all);
    let ablation = ablation_rows(&all);
    println!("WER (%)\n{}", render_table(&systems, &languages));
    println!("Ablation\n{}", render_ablation(&ablation, &languages));
    println!("Minutes per epoch\n{}", render_timing(&timing));
    if let Some(p) = a.json {
        write_json(&p, &serde_json::json!({"timing": timing, "ablation": ablation}))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fbank(a) => fbank(a),
        Command::KmeansTrain(a) => kmeans(a),
        Command::Tokenize(a) => tokenize(a),
        Command::BpeTrain(a) => bpe(a),
        Command::Train(a) | Command::Run(a) => run(a),
        Command::Decode(a) => decode(a),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                eprintln!("hint: {SEED_ENV} overrides the config seed; see README for the data layout");
            }
            ExitCode::FAILURE
        }
    }
}
