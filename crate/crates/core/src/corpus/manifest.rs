use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Language codes of the seven corpus domains.
pub const LANGUAGES: [&str; 7] = ["de", "nl", "fr", "es", "it", "pt", "pl"];

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub utt_id: String,
    pub lang: String,
    pub source_path: String,
    pub text: String,
    pub duration_s: f64,
}

/// Accepts the seven corpus languages, `syn`, and `syn-<suffix>` for
/// additional synthetic domains (`<suffix>` ASCII alphanumeric, 1-16 chars).
pub fn is_valid_lang(lang: &str) -> bool {
    if LANGUAGES.contains(&lang) || lang == "syn" {
        return true;
    }
    lang.strip_prefix("syn-").is_some_and(|s| {
        !s.is_empty() && s.len() <= 16 && s.chars().all(|c| c.is_ascii_alphanumeric())
    })
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        if self.utt_id.is_empty() {
            return Err(Error::Validation("empty utt_id".into()));
        }
        if !is_valid_lang(&self.lang) {
            return Err(Error::Validation(format!(
                "{}: language {:?} not allowed",
                self.utt_id, self.lang
            )));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::Validation(format!(
                "{}: duration {} must be positive",
                self.utt_id, self.duration_s
            )));
        }
        Ok(())
    }
}

/// Reads a JSON-lines manifest, preserving file order. Blank lines are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        utt.validate()?;
        if !seen.insert(utt.utt_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate utt_id {:?} at line {}",
                utt.utt_id,
                i + 1
            )));
        }
        out.push(utt);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, utts: &[Utterance]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for u in utts {
        let line = serde_json::to_string(u)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn total_duration_s(utts: &[Utterance]) -> f64 {
    utts.iter().map(|u| u.duration_s).sum()
}

/// Resolves `source_path` against the directory holding the manifest.
pub fn resolve_source(manifest_path: impl AsRef<Path>, utt: &Utterance) -> PathBuf {
    let p = Path::new(&utt.source_path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path
        .as_ref()
        .parent()
        .map(|d| d.join(p))
        .unwrap_or_else(|| p.to_path_buf())
}
