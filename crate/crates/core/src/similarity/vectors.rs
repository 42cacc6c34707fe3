use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use super::tokenize_identifier;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("cannot read vector file: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse `{token}` as a float")]
    Float { line: usize, token: String },
    #[error("vector file contains no entries")]
    Empty,
}

/// Word vectors in the whitespace-separated text format (`token f1 f2 ... fD`).
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dimension: usize,
    entries: HashMap<String, Vec<f32>>,
}

impl WordVectorTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    /// Loads only the listed tokens. Useful for multi-gigabyte files when the
    /// vocabulary of interest is known up front.
    pub fn load_filtered(path: impl AsRef<Path>, vocabulary: &HashSet<String>) -> Result<Self, VectorError> {
        Self::parse_with(BufReader::new(File::open(path)?), Some(vocabulary))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self, VectorError> {
        Self::parse_with(reader, None)
    }

    fn parse_with(reader: impl BufRead, vocabulary: Option<&HashSet<String>>) -> Result<Self, VectorError> {
        let mut dimension: Option<usize> = None;
        let mut entries = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if idx == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() {
                if let Ok(d) = rest[0].parse::<usize>() {
                    // "count dim" header
                    dimension = Some(d);
                    continue;
                }
            }
            let expected = *dimension.get_or_insert(rest.len());
            if rest.len() != expected {
                return Err(VectorError::Dimension {
                    line: lineno,
                    expected,
                    found: rest.len(),
                });
            }
            let key = token.to_lowercase();
            if vocabulary.is_some_and(|v| !v.contains(&key)) || entries.contains_key(&key) {
                continue;
            }
            let vector = rest
                .iter()
                .map(|t| {
                    t.parse::<f32>().map_err(|_| VectorError::Float {
                        line: lineno,
                        token: t.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            entries.insert(key, vector);
        }
        match dimension {
            Some(d) if d > 0 => Ok(Self { dimension: d, entries }),
            _ => Err(VectorError::Empty),
        }
    }

    pub fn from_entries(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Result<Self, VectorError> {
        let mut map = HashMap::new();
        for (i, (token, v)) in entries.into_iter().enumerate() {
            if v.len() != dimension {
                return Err(VectorError::Dimension {
                    line: i + 1,
                    expected: dimension,
                    found: v.len(),
                });
            }
            map.entry(token.to_lowercase()).or_insert(v);
        }
        Ok(Self {
            dimension,
            entries: map,
        })
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

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.entries.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Mean vector of the in-vocabulary tokens of `text`; `None` if none are known.
    pub fn embed(&self, text: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0f64; self.dimension];
        let mut n = 0usize;
        for token in tokenize_identifier(text) {
            if let Some(v) = self.entries.get(&token) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += f64::from(*x);
                }
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}
