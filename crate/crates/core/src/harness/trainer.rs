use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{utterance_seed, AugmentConfig, AugmentPlan};
use crate::bpe::BpeModel;
use crate::corpus::{EmbeddingSequence, TokenSequence};
use crate::decode::{beam_decode, greedy_decode, wer_text, ModelScorer, WerStats, MAX_SYMBOLS_PER_FRAME};
use crate::error::{Error, Result};
use crate::fbank::{spec_augment, SpecAugmentConfig};
use crate::numerics::{Adam, AdamConfig, Gradients, Graph, Tensor};
use crate::transducer::{AsrModel, ModelInput};

#[derive(Debug, Clone)]
pub enum ExampleInput {
    Features(Tensor),
    Tokens(TokenSequence),
}

#[derive(Debug, Clone)]
pub struct Example {
    pub utt_id: String,
    pub lang: String,
    pub text: String,
    pub labels: Vec<u32>,
    pub input: ExampleInput,
}

impl Example {
    pub fn model_input(&self) -> ModelInput<'_> {
        match &self.input {
            ExampleInput::Features(t) => ModelInput::Features(t),
            ExampleInput::Tokens(t) => ModelInput::Tokens(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub spec_augment: SpecAugmentConfig,
    pub early_stop_wer: Option<f64>,
    pub eval_every: usize,
    pub beam: usize,
    pub divergence_window: usize,
    pub divergence_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Wall-clock minutes spent in training steps (evaluation excluded).
    pub minutes: f64,
    pub dev_wer: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
}

/// Loss and detached parameter gradients of one utterance.
fn utterance_grad(model: &AsrModel, ex: &Example, opts: &TrainOptions, epoch: usize) -> Result<(f64, Gradients)> {
    let seed = utterance_seed(opts.seed, &ex.utt_id, epoch as u64);
    let mut g = Graph::new(&model.store);
    let loss = match &ex.input {
        ExampleInput::Features(x) if opts.augment.enabled => {
            let seq = EmbeddingSequence::from_tensor(x, 100.0, "train")?;
            let masked = spec_augment(&seq, &opts.spec_augment, seed).to_tensor();
            model.loss(&mut g, &ModelInput::Features(&masked), &ex.labels, None)?
        }
        ExampleInput::Features(x) => model.loss(&mut g, &ModelInput::Features(x), &ex.labels, None)?,
        ExampleInput::Tokens(t) => {
            let input = ModelInput::Tokens(t);
            let frames = model.input_frames(&input)?;
            let plan = AugmentPlan::sample(&opts.augment, frames, model.config.encoder.input_dim, seed);
            model.loss(&mut g, &input, &ex.labels, Some(&plan))?
        }
    };
    let value = g.scalar(loss);
    Ok((value, g.backward(loss)?.params))
}

/// Mini-batch Adam training. Per-utterance gradients run in parallel and
/// are summed in batch order, so results do not depend on thread timing.
pub fn train(model: &mut AsrModel, train_set: &[Example], dev: &[Example], bpe: &BpeModel, opts: &TrainOptions) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("no training utterances".into()));
    }
    let adam = Adam::new(AdamConfig::default());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = TrainOutcome::default();
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let start = Instant::now();
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .map(|&i| utterance_grad(model, &train_set[i], opts, epoch))
                .collect();
            let mut grads = Gradients::new(model.store.len());
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                grads.merge(&g);
            }
            let step_loss = batch_loss / batch.len() as f64;
            check_divergence(&out.step_losses, step_loss, epoch, opts)?;
            out.step_losses.push(step_loss);
            total += batch_loss;

            grads.scale(1.0 / batch.len() as f64);
            model.store.zero_grads();
            model.store.accumulate(&grads);
            let norm = model.store.grad_norm();
            if opts.max_grad_norm > 0.0 && norm > opts.max_grad_norm {
                model.store.scale_grads(opts.max_grad_norm / norm);
            }
            adam.step(&mut model.store, opts.lr)?;
        }
        let minutes = start.elapsed().as_secs_f64() / 60.0;
        let train_loss = total / train_set.len() as f64;
        let dev_wer = if !dev.is_empty() && (epoch + 1) % opts.eval_every.max(1) == 0 {
            let results = decode_examples(model, dev, bpe, opts.beam)?;
            Some(aggregate(&results).wer())
        } else {
            None
        };
        log::info!(
            "epoch {} loss {train_loss:.4} ({minutes:.3} min){}",
            epoch + 1,
            dev_wer.map(|w| format!(" dev WER {:.2}%", 100.0 * w)).unwrap_or_default()
        );
        out.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            minutes,
            dev_wer,
        });
        if let (Some(limit), Some(w)) = (opts.early_stop_wer, dev_wer) {
            if w <= limit {
                break;
            }
        }
    }
    Ok(out)
}

fn check_divergence(history: &[f64], loss: f64, epoch: usize, opts: &TrainOptions) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch: epoch + 1,
            reason: format!("non-finite loss {loss} at step {}", history.len() + 1),
        });
    }
    let w = opts.divergence_window;
    if w > 0 && history.len() >= w {
        let past = history[history.len() - w];
        if loss > opts.divergence_factor * past {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                reason: format!("loss grew from {past:.4} to {loss:.4} over {w} steps"),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub utt_id: String,
    pub lang: String,
    pub ref_text: String,
    pub hyp_text: String,
    pub log_score: f64,
    pub stats: WerStats,
}

/// Decodes every example (greedy for `beam <= 1`), in parallel, in order.
pub fn decode_examples(model: &AsrModel, examples: &[Example], bpe: &BpeModel, beam: usize) -> Result<Vec<DecodeOutput>> {
    examples
        .par_iter()
        .map(|ex| {
            let mut scorer = ModelScorer::new(model, &ex.model_input())?;
            let hyp = if beam <= 1 {
                greedy_decode(&mut scorer, MAX_SYMBOLS_PER_FRAME)
            } else {
                beam_decode(&mut scorer, beam, MAX_SYMBOLS_PER_FRAME)
            };
            let hyp_text = bpe.decode(&hyp.labels)?;
            Ok(DecodeOutput {
                utt_id: ex.utt_id.clone(),
                lang: ex.lang.clone(),
                stats: wer_text(&ex.text, &hyp_text),
                ref_text: ex.text.clone(),
                hyp_text,
                log_score: hyp.log_score,
            })
        })
        .collect()
}

pub fn aggregate(outputs: &[DecodeOutput]) -> WerStats {
    let mut total = WerStats::default();
    for o in outputs {
        total.add(&o.stats);
    }
    total
}
