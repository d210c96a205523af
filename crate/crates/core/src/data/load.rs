use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{normalize_token, Label, RawSample, RawSentence};
use crate::error::{Error, Result};
use crate::treeparse::parse_raw;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// One JSON object per line with SNLI field names.
    Jsonl,
    /// `premise<TAB>hypothesis<TAB>label`, whitespace-tokenized.
    Tsv,
}

impl DataFormat {
    /// Guesses the format from the file extension (`.jsonl`/`.json` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Tsv,
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "tsv" => Ok(DataFormat::Tsv),
            other => Err(format!("unknown data format {other:?} (expected jsonl or tsv)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    premise_binary_parse: String,
    hypothesis_binary_parse: String,
    gold_label: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedFile {
    pub samples: Vec<RawSample>,
    /// Records without a gold label (`"-"`).
    pub skipped: usize,
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<LoadedFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = LoadedFile::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Data {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let (premise, hypothesis, label) = match format {
            DataFormat::Jsonl => {
                let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                let label = Label::parse_gold(&rec.gold_label).map_err(err)?;
                let Some(label) = label else {
                    out.skipped += 1;
                    continue;
                };
                let p = parse_raw(&rec.premise_binary_parse).map_err(|e| err(format!("premise: {e}")))?;
                let h = parse_raw(&rec.hypothesis_binary_parse).map_err(|e| err(format!("hypothesis: {e}")))?;
                (RawSentence::Tree(p), RawSentence::Tree(h), label)
            }
            DataFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 3 {
                    return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
                }
                let label = Label::parse_gold(cols[2].trim()).map_err(err)?;
                let Some(label) = label else {
                    out.skipped += 1;
                    continue;
                };
                let tokens = |s: &str| -> Vec<String> { s.split_whitespace().map(normalize_token).collect() };
                let (p, h) = (tokens(cols[0]), tokens(cols[1]));
                if p.is_empty() || h.is_empty() {
                    return Err(err("empty sentence".into()));
                }
                (RawSentence::Tokens(p), RawSentence::Tokens(h), label)
            }
        };
        out.samples.push(RawSample {
            premise,
            hypothesis,
            label,
        });
    }
    Ok(out)
}

pub fn write_samples(path: &Path, format: DataFormat, samples: &[RawSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        match format {
            DataFormat::Tsv => writeln!(w, "{}\t{}\t{}", s.premise.text(), s.hypothesis.text(), s.label)?,
            DataFormat::Jsonl => {
                let rec = JsonRecord {
                    premise_binary_parse: s.premise.to_sexpr(),
                    hypothesis_binary_parse: s.hypothesis.to_sexpr(),
                    gold_label: s.label.to_string(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
