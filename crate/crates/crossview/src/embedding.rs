//! Pretrained word-vector ingestion and fixed-length text vectors.
//!
//! Each instance's token list becomes the concatenation of its first
//! `max_words` resolved word vectors, zero-padded to `d * max_words`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Word-vector lookup table in the GloVe text format:
/// one `<token> <f1> ... <fd>` line per entry, no header.
#[derive(Debug, Clone)]
pub struct GloveTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

/// What to do with a token that has no table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Insert a zero block in the token's word slot.
    Zero,
    /// Drop the token; later tokens shift forward.
    Skip,
}

impl GloveTable {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut dimension = 0usize;
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a first field");
            let mut vector = Vec::new();
            for field in fields {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad float {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value {v}"),
                    });
                }
                vector.push(v);
            }
            if dimension == 0 {
                if vector.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "token with no vector values".into(),
                    });
                }
                dimension = vector.len();
            } else if vector.len() != dimension {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {dimension} values, got {}", vector.len()),
                });
            }
            // Duplicate tokens: the last occurrence wins.
            entries.insert(token.to_string(), vector);
        }
        if entries.is_empty() {
            return Err(Error::Format("word-vector file has no entries".into()));
        }
        Ok(Self { dimension, entries })
    }

    /// Builds a table from in-memory entries (synthetic vocabularies, tests).
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let entries: BTreeMap<String, Vec<f64>> = entries.into_iter().collect();
        let dimension = match entries.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::Format("word-vector table has no entries".into())),
        };
        if dimension == 0 || entries.values().any(|v| v.len() != dimension) {
            return Err(Error::Format("word-vector entries must share one nonzero length".into()));
        }
        Ok(Self { dimension, entries })
    }

    /// Writes the table back out in the same text format, one token per line
    /// in sorted order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for (token, vector) in &self.entries {
            out.write_all(token.as_bytes())?;
            for v in vector {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Keeps only the listed tokens (after normalization misses are dropped).
    pub fn retain_tokens(&mut self, keep: &std::collections::HashSet<String>) {
        self.entries.retain(|t, _| keep.contains(t));
    }
}

/// Fixed-length concatenation of word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TextVector {
    /// Length is always `d * max_words`.
    pub data: Vec<f64>,
    /// Word slots actually consumed; everything after them is zero.
    pub used_words: usize,
}

/// Lowercases and strips surrounding ASCII punctuation. Returns an empty
/// string for tokens that are punctuation only.
pub fn normalize_token(raw: &str) -> String {
    raw.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase()
}

/// Concatenates the word vectors of the first `max_words` usable tokens and
/// zero-pads the rest.
///
/// Tokens normalizing to the empty string are dropped regardless of policy.
pub fn vectorize(
    tokens: &[String],
    table: &GloveTable,
    max_words: usize,
    oov: OovPolicy,
) -> Result<TextVector> {
    if max_words == 0 {
        return Err(Error::Argument("max_words must be at least 1".into()));
    }
    let d = table.dimension();
    let mut data = vec![0.0; d * max_words];
    let mut slot = 0usize;
    for raw in tokens {
        if slot == max_words {
            break;
        }
        let token = normalize_token(raw);
        if token.is_empty() {
            continue;
        }
        match table.get(&token) {
            Some(vector) => {
                data[slot * d..(slot + 1) * d].copy_from_slice(vector);
                slot += 1;
            }
            None => match oov {
                OovPolicy::Zero => slot += 1, // the slot stays a zero block
                OovPolicy::Skip => {}
            },
        }
    }
    Ok(TextVector { data, used_words: slot })
}
