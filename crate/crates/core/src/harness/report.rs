use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::InputMode;
use super::trainer::EpochRecord;
use crate::corpus::formats::write_file;
use crate::decode::WerStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangResult {
    pub lang: String,
    pub dev: WerStats,
    pub test: WerStats,
    /// Cluster purity of the training tokens against hidden states, when
    /// the corpus carries them.
    pub purity: Option<f64>,
}

/// Outcome of training and scoring one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub input_mode: InputMode,
    pub mix_data: bool,
    pub shared_kmeans: bool,
    pub units: usize,
    pub bpe_vocab: usize,
    pub languages: Vec<String>,
    pub results: Vec<LangResult>,
    pub epochs: Vec<EpochRecord>,
    pub loss_curve: Vec<f64>,
    pub total_params: usize,
    pub lr: f64,
    pub codebook_files: Vec<String>,
    pub mean_encoder_input_frames: f64,
}

impl RunReport {
    pub fn result(&self, lang: &str) -> Option<&LangResult> {
        self.results.iter().find(|r| r.lang == lang)
    }

    /// Mean wall-clock minutes per training epoch.
    pub fn minutes_per_epoch(&self) -> Option<f64> {
        if self.epochs.is_empty() {
            return None;
        }
        Some(self.epochs.iter().map(|e| e.minutes).sum::<f64>() / self.epochs.len() as f64)
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    let _ = write!(out, "|-{}-|\n", rule.join("-|-"));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// Dev and test WER (%) per language, plus averages, for each system.
/// A system is a label and the reports that together cover its languages.
fn wer_cells(reports: &[RunReport], languages: &[String]) -> Vec<String> {
    let mut cells = Vec::new();
    let (mut dev_sum, mut test_sum, mut n) = (0.0, 0.0, 0usize);
    for lang in languages {
        match reports.iter().find_map(|r| r.result(lang)) {
            Some(res) => {
                let (d, t) = (res.dev.wer(), res.test.wer());
                dev_sum += d;
                test_sum += t;
                n += 1;
                cells.push(pct(d));
                cells.push(pct(t));
            }
            None => {
                cells.push("-".into());
                cells.push("-".into());
            }
        }
    }
    if n > 0 {
        cells.push(pct(dev_sum / n as f64));
        cells.push(pct(test_sum / n as f64));
    } else {
        cells.push("-".into());
        cells.push("-".into());
    }
    cells
}

fn lang_header(languages: &[String]) -> Vec<String> {
    let mut h = Vec::new();
    for lang in languages {
        h.push(format!("{lang} dev"));
        h.push(format!("{lang} test"));
    }
    h.push("avg dev".into());
    h.push("avg test".into());
    h
}

/// Systems-by-languages WER table.
pub fn render_table(systems: &[(String, Vec<RunReport>)], languages: &[String]) -> String {
    let mut header = vec!["system".to_string()];
    header.extend(lang_header(languages));
    let rows: Vec<Vec<String>> = systems
        .iter()
        .map(|(label, reports)| {
            let mut row = vec![label.clone()];
            row.extend(wer_cells(reports, languages));
            row
        })
        .collect();
    render(&header, &rows)
}

/// One row of the mixing/sharing/units grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mix_data: bool,
    pub shared_kmeans: bool,
    pub units: usize,
    pub codebooks: usize,
    /// lang -> (dev WER, test WER)
    pub wer: BTreeMap<String, (f64, f64)>,
}

/// Groups reports by (mix, shared, units), one row per configuration.
pub fn ablation_rows(reports: &[RunReport]) -> Vec<AblationRow> {
    let mut rows: Vec<AblationRow> = Vec::new();
    for r in reports {
        let idx = match rows
            .iter()
            .position(|a| a.mix_data == r.mix_data && a.shared_kmeans == r.shared_kmeans && a.units == r.units)
        {
            Some(i) => i,
            None => {
                rows.push(AblationRow {
                    mix_data: r.mix_data,
                    shared_kmeans: r.shared_kmeans,
                    units: r.units,
                    codebooks: r.codebook_files.len(),
                    wer: BTreeMap::new(),
                });
                rows.len() - 1
            }
        };
        for res in &r.results {
            rows[idx].wer.insert(res.lang.clone(), (res.dev.wer(), res.test.wer()));
        }
    }
    rows
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

pub fn render_ablation(rows: &[AblationRow], languages: &[String]) -> String {
    let mut header = vec!["mix data".to_string(), "shared kmeans".into(), "units".into()];
    header.extend(lang_header(languages));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|a| {
            let mut row = vec![yes_no(a.mix_data), yes_no(a.shared_kmeans), a.units.to_string()];
            let (mut ds, mut ts, mut n) = (0.0, 0.0, 0usize);
            for lang in languages {
                match a.wer.get(lang) {
                    Some(&(d, t)) => {
                        ds += d;
                        ts += t;
                        n += 1;
                        row.push(pct(d));
                        row.push(pct(t));
                    }
                    None => row.extend(["-".to_string(), "-".to_string()]),
                }
            }
            if n > 0 {
                row.push(pct(ds / n as f64));
                row.push(pct(ts / n as f64));
            } else {
                row.extend(["-".to_string(), "-".to_string()]);
            }
            row
        })
        .collect();
    render(&header, &body)
}

/// Minutes per epoch of the discrete and fbank runs for one language set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub languages: String,
    pub discrete_min_per_epoch: Option<f64>,
    pub fbank_min_per_epoch: Option<f64>,
    pub discrete_frames: Option<f64>,
    pub fbank_frames: Option<f64>,
}

impl TimingRow {
    /// discrete / fbank, when both sides were measured.
    pub fn ratio(&self) -> Option<f64> {
        match (self.discrete_min_per_epoch, self.fbank_min_per_epoch) {
            (Some(d), Some(f)) if f > 0.0 => Some(d / f),
            _ => None,
        }
    }
}

/// Pairs discrete and fbank runs by language set. No reports, no rows.
pub fn timing_report(reports: &[RunReport]) -> Vec<TimingRow> {
    let mut rows: BTreeMap<String, TimingRow> = BTreeMap::new();
    for r in reports {
        let key = r.languages.join("+");
        let row = rows.entry(key.clone()).or_insert_with(|| TimingRow {
            languages: key,
            discrete_min_per_epoch: None,
            fbank_min_per_epoch: None,
            discrete_frames: None,
            fbank_frames: None,
        });
        let m = r.minutes_per_epoch();
        match r.input_mode {
            InputMode::Discrete => {
                row.discrete_min_per_epoch = m;
                row.discrete_frames = Some(r.mean_encoder_input_frames);
            }
            InputMode::Fbank => {
                row.fbank_min_per_epoch = m;
                row.fbank_frames = Some(r.mean_encoder_input_frames);
            }
        }
    }
    rows.into_values().collect()
}

pub fn render_timing(rows: &[TimingRow]) -> String {
    let opt = |x: Option<f64>, digits: usize| x.map(|v| format!("{v:.digits$}")).unwrap_or_else(|| "-".into());
    let header: Vec<String> = ["languages", "discrete min/epoch", "fbank min/epoch", "ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.languages.clone(),
                opt(r.discrete_min_per_epoch, 4),
                opt(r.fbank_min_per_epoch, 4),
                opt(r.ratio(), 3),
            ]
        })
        .collect();
    render(&header, &body)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// Reads reports from a `reports.json` array or a single `report.json`.
pub fn read_reports(path: &Path) -> Result<Vec<RunReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(err: usize, n: usize) -> WerStats {
        WerStats {
            substitutions: err,
            deletions: 0,
            insertions: 0,
            ref_words: n,
        }
    }

    fn report(mode: InputMode, langs: &[&str], minutes: &[f64]) -> RunReport {
        RunReport {
            name: "t".into(),
            config_hash: "h".into(),
            input_mode: mode,
            mix_data: langs.len() > 1,
            shared_kmeans: false,
            units: 8,
            bpe_vocab: 10,
            languages: langs.iter().map(|s| s.to_string()).collect(),
            results: langs
                .iter()
                .map(|l| LangResult {
                    lang: l.to_string(),
                    dev: stats(1, 10),
                    test: stats(2, 10),
                    purity: None,
                })
                .collect(),
            epochs: minutes
                .iter()
                .enumerate()
                .map(|(i, &m)| EpochRecord {
                    epoch: i + 1,
                    train_loss: 1.0,
                    minutes: m,
                    dev_wer: None,
                })
                .collect(),
            loss_curve: vec![],
            total_params: 1,
            lr: 1e-3,
            codebook_files: vec![],
            mean_encoder_input_frames: 100.0,
        }
    }

    #[test]
    fn timing_empty() {
        assert!(timing_report(&[]).is_empty());
        assert_eq!(render_timing(&[]).lines().count(), 2);
    }

    #[test]
    fn timing_pairs_modes() {
        let rows = timing_report(&[
            report(InputMode::Discrete, &["en"], &[1.0, 3.0]),
            report(InputMode::Fbank, &["en"], &[4.0]),
            report(InputMode::Fbank, &["de"], &[4.0]),
        ]);
        assert_eq!(rows.len(), 2);
        let en = rows.iter().find(|r| r.languages == "en").unwrap();
        assert_eq!(en.ratio(), Some(0.5));
        assert_eq!(rows.iter().find(|r| r.languages == "de").unwrap().ratio(), None);
    }

    #[test]
    fn table_averages() {
        let langs = vec!["en".to_string(), "de".to_string()];
        let t = render_table(&[("sys".into(), vec![report(InputMode::Discrete, &["en", "de"], &[1.0])])], &langs);
        let row = t.lines().nth(2).unwrap();
        assert!(row.contains("10.00") && row.contains("20.00"), "{row}");
    }

    #[test]
    fn ablation_groups_runs() {
        let a = report(InputMode::Discrete, &["en"], &[1.0]);
        let b = report(InputMode::Discrete, &["de"], &[1.0]);
        let rows = ablation_rows(&[a, b]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].wer.len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = vec![report(InputMode::Fbank, &["en"], &[2.0])];
        let p = dir.path().join("reports.json");
        write_json(&p, &r).unwrap();
        assert_eq!(read_reports(&p).unwrap(), r);
    }
}
