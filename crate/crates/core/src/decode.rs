//! Greedy and beam transducer search, and word error rate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::bpe::normalize;
use crate::error::Result;
use crate::numerics::kernels::log_add_exp;
use crate::transducer::{AsrModel, ModelInput};

pub const MAX_SYMBOLS_PER_FRAME: usize = 5;

/// Anything that yields normalized log-probs at (frame, label context).
pub trait JointScorer {
    fn num_frames(&self) -> usize;
    fn blank(&self) -> u32;
    fn context_size(&self) -> usize;
    fn log_probs(&mut self, t: usize, context: &[u32]) -> Vec<f64>;

    /// Last `context_size` labels of `hyp`, blank-padded on the left.
    fn context_of(&self, hyp: &[u32]) -> Vec<u32> {
        let c = self.context_size();
        let mut ctx = vec![self.blank(); c.saturating_sub(hyp.len())];
        ctx.extend_from_slice(&hyp[hyp.len().saturating_sub(c)..]);
        ctx
    }
}

/// Scores with a trained model; encoder projections are computed once and
/// predictor projections are cached per context.
pub struct ModelScorer<'a> {
    model: &'a AsrModel,
    enc: Vec<Vec<f64>>,
    cache: HashMap<Vec<u32>, Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a AsrModel, input: &ModelInput) -> Result<Self> {
        let h = model.encode(input)?;
        let enc = (0..h.rows())
            .map(|t| model.joint().project_encoder_row(&model.store, h.row(t)))
            .collect();
        Ok(Self {
            model,
            enc,
            cache: HashMap::new(),
        })
    }
}

impl JointScorer for ModelScorer<'_> {
    fn num_frames(&self) -> usize {
        self.enc.len()
    }

    fn blank(&self) -> u32 {
        self.model.blank()
    }

    fn context_size(&self) -> usize {
        self.model.predictor().config.context_size
    }

    fn log_probs(&mut self, t: usize, context: &[u32]) -> Vec<f64> {
        let model = self.model;
        let pf = self.cache.entry(context.to_vec()).or_insert_with(|| {
            let f = model.predictor().context_vector(&model.store, context);
            model.joint().project_predictor_row(&model.store, &f)
        });
        model.joint().log_probs_from_projected(&model.store, &self.enc[t], pf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub labels: Vec<u32>,
    pub log_score: f64,
}

/// Lowest index among the maxima.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Per frame, emit the argmax label until blank wins or `max_symbols`
/// labels were emitted, then advance.
pub fn greedy_decode(scorer: &mut impl JointScorer, max_symbols: usize) -> Hypothesis {
    let blank = scorer.blank();
    let mut labels = Vec::new();
    let mut score = 0.0;
    for t in 0..scorer.num_frames() {
        let mut emitted = 0;
        while emitted < max_symbols {
            let ctx = scorer.context_of(&labels);
            let lp = scorer.log_probs(t, &ctx);
            let k = argmax(&lp);
            score += lp[k];
            if k as u32 == blank {
                break;
            }
            labels.push(k as u32);
            emitted += 1;
        }
    }
    Hypothesis {
        labels,
        log_score: score,
    }
}

/// Orders candidates best first: higher score, then frame-finished before
/// still-expanding, then lexicographically smaller labels.
fn rank(a: &(bool, &Vec<u32>, f64), b: &(bool, &Vec<u32>, f64)) -> Ordering {
    b.2.partial_cmp(&a.2)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.0.cmp(&a.0))
        .then_with(|| a.1.cmp(b.1))
}

fn merge(map: &mut BTreeMap<Vec<u32>, f64>, key: Vec<u32>, score: f64) {
    map.entry(key)
        .and_modify(|s| *s = log_add_exp(*s, score))
        .or_insert(score);
}

/// Time-synchronous beam search. Hypotheses with identical label sequences
/// are merged by adding their probabilities. With `beam = 1` this follows
/// exactly the greedy path.
pub fn beam_decode(scorer: &mut impl JointScorer, beam: usize, max_symbols: usize) -> Hypothesis {
    let beam = beam.max(1);
    let blank = scorer.blank() as usize;
    let mut alive: BTreeMap<Vec<u32>, f64> = BTreeMap::from([(Vec::new(), 0.0)]);
    for t in 0..scorer.num_frames() {
        let mut done: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let mut cur = std::mem::take(&mut alive);
        for step in 0..=max_symbols {
            if cur.is_empty() {
                break;
            }
            let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (hyp, sc) in &cur {
                if step == max_symbols {
                    merge(&mut done, hyp.clone(), *sc);
                    continue;
                }
                let ctx = scorer.context_of(hyp);
                let lp = scorer.log_probs(t, &ctx);
                merge(&mut done, hyp.clone(), sc + lp[blank]);
                for (k, l) in lp.iter().enumerate() {
                    if k != blank {
                        let mut ext = hyp.clone();
                        ext.push(k as u32);
                        merge(&mut next, ext, sc + l);
                    }
                }
            }
            let mut pool: Vec<(bool, &Vec<u32>, f64)> = done
                .iter()
                .map(|(h, s)| (true, h, *s))
                .chain(next.iter().map(|(h, s)| (false, h, *s)))
                .collect();
            pool.sort_by(rank);
            pool.truncate(beam);
            let keep_done: BTreeMap<Vec<u32>, f64> =
                pool.iter().filter(|c| c.0).map(|c| (c.1.clone(), c.2)).collect();
            cur = pool.iter().filter(|c| !c.0).map(|c| (c.1.clone(), c.2)).collect();
            done = keep_done;
        }
        alive = done;
    }
    let mut finals: Vec<(bool, &Vec<u32>, f64)> = alive.iter().map(|(h, s)| (true, h, *s)).collect();
    finals.sort_by(rank);
    match finals.first() {
        Some((_, labels, score)) => Hypothesis {
            labels: (*labels).clone(),
            log_score: *score,
        },
        None => Hypothesis {
            labels: Vec::new(),
            log_score: 0.0,
        },
    }
}

/// Edit counts of a hypothesis against a reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerStats {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WerStats {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `errors / ref_words`; an empty reference scores 0 against an empty
    /// hypothesis and 1 per inserted word otherwise.
    pub fn wer(&self) -> f64 {
        if self.ref_words == 0 {
            return self.errors() as f64;
        }
        self.errors() as f64 / self.ref_words as f64
    }

    pub fn add(&mut self, other: &WerStats) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_words += other.ref_words;
    }
}

/// Levenshtein alignment with unit costs. Among equally short alignments
/// the one with the fewest substitutions, then deletions, is reported.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> WerStats {
    // (total, S, D, I), compared lexicographically
    type Cost = (usize, usize, usize, usize);
    let add = |c: Cost, s: usize, d: usize, i: usize| (c.0 + s + d + i, c.1 + s, c.2 + d, c.3 + i);
    let m = hypothesis.len();
    let mut prev: Vec<Cost> = (0..=m).map(|j| (j, 0, 0, j)).collect();
    for (i, r) in reference.iter().enumerate() {
        let mut row = Vec::with_capacity(m + 1);
        row.push((i + 1, 0, i + 1, 0));
        for (j, h) in hypothesis.iter().enumerate() {
            let diag = if r.as_ref() == h.as_ref() {
                prev[j]
            } else {
                add(prev[j], 1, 0, 0)
            };
            let del = add(prev[j + 1], 0, 1, 0);
            let ins = add(row[j], 0, 0, 1);
            row.push(diag.min(del).min(ins));
        }
        prev = row;
    }
    let (_, s, d, i) = prev[m];
    WerStats {
        substitutions: s,
        deletions: d,
        insertions: i,
        ref_words: reference.len(),
    }
}

/// Scoring words: same normalization as the label tokenizer.
pub fn words(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|w| !w.is_empty()).map(String::from).collect()
}

pub fn wer_text(reference: &str, hypothesis: &str) -> WerStats {
    wer(&words(reference), &words(hypothesis))
}
