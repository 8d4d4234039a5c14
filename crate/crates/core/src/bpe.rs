//! Byte-pair-encoding label units for transcripts.
//!
//! Words carry a leading `▁` on their first symbol. Ids 0 and 1 are
//! reserved for the transducer blank and for unknown characters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const BLANK: &str = "<blank>";
pub const UNK: &str = "<unk>";
pub const BLANK_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const WORD_MARK: char = '▁';
/// Printed in place of an unknown unit.
pub const UNK_MARK: &str = "⁇";

/// NFC, lowercase, single spaces, no leading or trailing space.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn word_symbols(word: &str) -> Vec<String> {
    let mut chars = word.chars();
    let first = chars.next().expect("split_whitespace yields non-empty words");
    let mut out = vec![format!("{WORD_MARK}{first}")];
    out.extend(chars.map(String::from));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpeModel {
    pub vocab: Vec<String>,
    pub merges: Vec<(String, String)>,
    pub target_size: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
    #[serde(skip)]
    ranks: HashMap<(String, String), usize>,
}

impl BpeModel {
    fn from_parts(vocab: Vec<String>, merges: Vec<(String, String)>, target_size: usize) -> Result<Self> {
        if vocab.first().map(String::as_str) != Some(BLANK) || vocab.get(1).map(String::as_str) != Some(UNK) {
            return Err(Error::Format(format!("BPE vocabulary must start with {BLANK}, {UNK}")));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, v) in vocab.iter().enumerate() {
            if index.insert(v.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate BPE unit {v:?}")));
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (r, (a, b)) in merges.iter().enumerate() {
            let joined = format!("{a}{b}");
            if !index.contains_key(&joined) {
                return Err(Error::Format(format!("merge output {joined:?} missing from vocabulary")));
            }
            ranks.entry((a.clone(), b.clone())).or_insert(r);
        }
        Ok(Self {
            vocab,
            merges,
            target_size,
            index,
            ranks,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn id(&self, unit: &str) -> Option<u32> {
        self.index.get(unit).copied()
    }

    /// Normalizes `text` and maps it to unit ids; never emits the blank.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let norm = normalize(text);
        let mut out = Vec::new();
        for word in norm.split(' ').filter(|w| !w.is_empty()) {
            let mut syms = word_symbols(word);
            if !self.index.contains_key(&syms[0]) {
                let first = syms[0].chars().nth(1).expect("marked symbol").to_string();
                syms.splice(0..1, [WORD_MARK.to_string(), first]);
            }
            self.apply_merges(&mut syms);
            out.extend(syms.iter().map(|s| self.id(s).unwrap_or(UNK_ID)));
        }
        out
    }

    fn apply_merges(&self, syms: &mut Vec<String>) {
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|r| (*r, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == *a && syms[i + 1] == *b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = merged;
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut s = String::new();
        for &id in ids {
            match id {
                BLANK_ID => return Err(Error::Validation("blank id in a label sequence".into())),
                UNK_ID => s.push_str(UNK_MARK),
                _ => s.push_str(self.vocab.get(id as usize).ok_or_else(|| {
                    Error::Validation(format!("id {id} outside vocabulary of {}", self.vocab.len()))
                })?),
            }
        }
        let spaced = s.replace(WORD_MARK, " ");
        Ok(spaced.strip_prefix(' ').unwrap_or(&spaced).to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BpeModel = serde_json::from_str(s)?;
        Self::from_parts(raw.vocab, raw.merges, raw.target_size)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::corpus::formats::write_file(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = crate::corpus::formats::read_file(path.as_ref())?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// Greedy highest-frequency merges until the vocabulary reaches
/// `target_size` or no adjacent pair occurs twice. Frequency ties go to the
/// lexicographically smallest pair.
pub fn bpe_train<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<BpeModel> {
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for w in normalize(line.as_ref()).split(' ').filter(|w| !w.is_empty()) {
            *word_counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyInput("BPE training corpus has no words".into()));
    }
    let mut words: Vec<(Vec<String>, usize)> = word_counts
        .into_iter()
        .map(|(w, c)| (word_symbols(&w), c))
        .collect();

    // Bare characters and the bare marker are included so that any word over
    // the training alphabet can be spelled, whatever its first letter.
    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    alphabet.insert(WORD_MARK.to_string());
    for (syms, _) in &words {
        for s in syms {
            alphabet.insert(s.clone());
            if let Some(rest) = s.strip_prefix(WORD_MARK) {
                alphabet.insert(rest.to_string());
            }
        }
    }
    let base = alphabet.len() + 2;
    if target_size < base {
        return Err(Error::Config(format!(
            "target size {target_size} is below the {} alphabet symbols plus 2 reserved ids",
            alphabet.len()
        )));
    }

    let mut vocab: Vec<String> = vec![BLANK.into(), UNK.into()];
    vocab.extend(alphabet.iter().cloned());
    let mut known: BTreeSet<String> = alphabet;
    let mut merges = Vec::new();
    while vocab.len() < target_size {
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += c;
            }
        }
        let best = pairs
            .into_iter()
            .max_by(|(pa, fa), (pb, fb)| fa.cmp(fb).then_with(|| pb.cmp(pa)));
        let Some(((a, b), freq)) = best else { break };
        if freq < 2 {
            break;
        }
        let (a, b) = (a.to_string(), b.to_string());
        let joined = format!("{a}{b}");
        for (syms, _) in words.iter_mut() {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i] == a && syms[i + 1] == b {
                    syms[i] = joined.clone();
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        if known.insert(joined.clone()) {
            vocab.push(joined);
        }
        merges.push((a, b));
    }
    BpeModel::from_parts(vocab, merges, target_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_corpus() {
        // alphabet {▁, ▁a, a}
        let m = bpe_train(&["aaaa"], 6).unwrap();
        assert_eq!(m.merges[0], ("a".to_string(), "a".to_string()));
        assert_eq!(m.vocab_size(), 6);
    }

    #[test]
    fn frequency_beats_order() {
        let m = bpe_train(&["ab", "ab", "ac"], 100).unwrap();
        assert_eq!(m.merges[0], ("▁a".to_string(), "b".to_string()));
        assert_eq!(m.merges.len(), 1);
    }

    #[test]
    fn ties_are_lexicographic() {
        let m = bpe_train(&["xy xy ab ab"], 100).unwrap();
        assert_eq!(m.merges[0], ("▁a".to_string(), "b".to_string()));
    }

    #[test]
    fn target_too_small() {
        assert!(matches!(bpe_train(&["abc"], 4), Err(Error::Config(_))));
        assert!(matches!(bpe_train::<&str>(&[], 40), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn round_trips_and_unknowns() {
        let corpus = ["the cat sat", "The  hat", "a cat in a hat"];
        let m = bpe_train(&corpus, 30).unwrap();
        for s in corpus {
            let ids = m.encode(s);
            assert!(!ids.contains(&BLANK_ID) && !ids.contains(&UNK_ID));
            assert_eq!(m.decode(&ids).unwrap(), normalize(s));
        }
        assert!(m.encode("").is_empty());
        assert_eq!(m.decode(&[]).unwrap(), "");
        // `h` never starts a training word but must still be spelled.
        assert_eq!(m.decode(&m.encode("hat")).unwrap(), "hat");
        let ids = m.encode("cqt");
        assert!(ids.contains(&UNK_ID));
        assert_eq!(m.decode(&ids).unwrap(), format!("c{UNK_MARK}t"));
        assert!(matches!(m.decode(&[999]), Err(Error::Validation(_))));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let corpus = ["hello world", "hello there", "world peace"];
        let a = bpe_train(&corpus, 25).unwrap();
        let b = bpe_train(&corpus, 25).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = BpeModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.encode("hello world"), a.encode("hello world"));
    }
}
