//! String and embedding similarity measures, all mapping into `[0, 1]`.

mod vectors;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use vectors::{VectorError, WordVectorTable};

/// Splits an identifier into lowercase word tokens.
///
/// Boundaries are any non-alphanumeric character, letter/digit transitions,
/// and camelCase humps (`HTTPServer` splits as `http`, `server`).
pub fn tokenize_identifier(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in name.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_alphabetic() && cur.is_numeric())
                || (prev.is_numeric() && cur.is_alphabetic())
                || (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next.is_some_and(|n| n.is_lowercase()));
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>());
        }
    }
    tokens
        .into_iter()
        .map(|t| t.to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn bigrams(s: &str) -> HashSet<(char, char)> {
    let chars: Vec<char> = s.to_lowercase().chars().collect();
    chars.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Both bigram sets empty means both inputs are shorter than two characters;
/// those compare by equality.
fn degenerate(x: &str, y: &str) -> f64 {
    if x.to_lowercase() == y.to_lowercase() {
        1.0
    } else {
        0.0
    }
}

pub fn bigram_jaccard(x: &str, y: &str) -> f64 {
    let (a, b) = (bigrams(x), bigrams(y));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => degenerate(x, y),
        (true, false) | (false, true) => 0.0,
        _ => {
            let inter = a.intersection(&b).count();
            let union = a.len() + b.len() - inter;
            inter as f64 / union as f64
        }
    }
}

pub fn sorensen_dice(x: &str, y: &str) -> f64 {
    let (a, b) = (bigrams(x), bigrams(y));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => degenerate(x, y),
        (true, false) | (false, true) => 0.0,
        _ => {
            let inter = a.intersection(&b).count();
            2.0 * inter as f64 / (a.len() + b.len()) as f64
        }
    }
}

/// Dice coefficient over identifier token sets rather than character bigrams.
pub fn token_dice(x: &str, y: &str) -> f64 {
    let a: HashSet<String> = tokenize_identifier(x).into_iter().collect();
    let b: HashSet<String> = tokenize_identifier(y).into_iter().collect();
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    2.0 * a.intersection(&b).count() as f64 / (a.len() + b.len()) as f64
}

/// Cosine similarity result with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineScore {
    /// `(cos + 1) / 2`, or 0 when either side is out of vocabulary.
    pub score: f64,
    pub raw_cosine: Option<f64>,
    pub out_of_vocabulary: bool,
}

pub fn embedding_cosine(x: &str, y: &str, table: &WordVectorTable) -> CosineScore {
    let oov = CosineScore {
        score: 0.0,
        raw_cosine: None,
        out_of_vocabulary: true,
    };
    let (Some(a), Some(b)) = (table.embed(x), table.embed(y)) else {
        return oov;
    };
    let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return oov;
    }
    let cos = if a == b {
        1.0
    } else {
        let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        (dot / (na * nb)).clamp(-1.0, 1.0)
    };
    CosineScore {
        score: ((cos + 1.0) / 2.0).clamp(0.0, 1.0),
        raw_cosine: Some(cos),
        out_of_vocabulary: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    #[serde(alias = "jaccard")]
    BigramJaccard,
    #[serde(alias = "dice")]
    SorensenDice,
    #[serde(alias = "embedding", alias = "cosine")]
    EmbeddingCosine,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasureKind::BigramJaccard => "jaccard",
            MeasureKind::SorensenDice => "dice",
            MeasureKind::EmbeddingCosine => "embedding",
        })
    }
}

impl FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" | "bigram_jaccard" => Ok(MeasureKind::BigramJaccard),
            "dice" | "sorensen_dice" => Ok(MeasureKind::SorensenDice),
            "embedding" | "cosine" | "embedding_cosine" => Ok(MeasureKind::EmbeddingCosine),
            other => Err(format!("unknown similarity measure `{other}`")),
        }
    }
}

/// A configured similarity function `sim(x, y) ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct SimilarityMeasure {
    kind: MeasureKind,
    strip_separators: bool,
    vectors: Option<Arc<WordVectorTable>>,
}

impl SimilarityMeasure {
    pub fn jaccard() -> Self {
        Self {
            kind: MeasureKind::BigramJaccard,
            strip_separators: false,
            vectors: None,
        }
    }

    pub fn dice() -> Self {
        Self {
            kind: MeasureKind::SorensenDice,
            strip_separators: false,
            vectors: None,
        }
    }

    pub fn embedding(table: Arc<WordVectorTable>) -> Self {
        Self {
            kind: MeasureKind::EmbeddingCosine,
            strip_separators: false,
            vectors: Some(table),
        }
    }

    /// Drop non-alphanumeric characters before computing string measures, so
    /// `first_name` and `FirstName` compare equal. Embeddings tokenize anyway
    /// and ignore this flag.
    pub fn strip_separators(mut self, on: bool) -> Self {
        self.strip_separators = on;
        self
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn vectors(&self) -> Option<&Arc<WordVectorTable>> {
        self.vectors.as_ref()
    }

    pub fn score(&self, x: &str, y: &str) -> f64 {
        match self.kind {
            MeasureKind::BigramJaccard => self.with_strings(x, y, bigram_jaccard),
            MeasureKind::SorensenDice => self.with_strings(x, y, sorensen_dice),
            MeasureKind::EmbeddingCosine => {
                let table = self
                    .vectors
                    .as_ref()
                    .expect("embedding measure is constructed with a table");
                embedding_cosine(x, y, table).score
            }
        }
    }

    fn with_strings(&self, x: &str, y: &str, f: fn(&str, &str) -> f64) -> f64 {
        if self.strip_separators {
            let strip = |s: &str| s.chars().filter(|c| c.is_alphanumeric()).collect::<String>();
            f(&strip(x), &strip(y))
        } else {
            f(x, y)
        }
    }
}
