//! Prompt-compression filters over the option and example databases.
//!
//! The entity filter keeps only options whose declared data type and entity
//! label both equal the query column's. The two-stage retrieval filter keeps
//! the `k1` options whose text is most similar to the query column name, then
//! the `k2` most similar exemplars of each kept option.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::ner::{EntityLabel, LabelVerdict, Labeler};
use crate::schema::{DataType, ObjectType, SourceColumn};
use crate::similarity::SimilarityMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionEntry {
    /// Position in the object type's attribute list.
    pub index: usize,
    pub attribute_id: String,
    pub text: String,
    pub dtype: DataType,
    pub entity_label: EntityLabel,
    pub depth: usize,
}

/// The candidate destination attributes of one object type, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionDatabase {
    pub object_type: String,
    pub options: Vec<OptionEntry>,
}

impl OptionDatabase {
    pub fn from_object_type(ot: &ObjectType) -> Self {
        let options = ot
            .attributes
            .iter()
            .enumerate()
            .map(|(index, a)| OptionEntry {
                index,
                attribute_id: a.id.clone(),
                text: a.name.clone(),
                dtype: a.dtype,
                entity_label: a.entity_label,
                depth: a.depth(),
            })
            .collect();
        Self {
            object_type: ot.name.clone(),
            options,
        }
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }
}

/// Exemplar names per attribute id. Rows may have different lengths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleDatabase {
    pub rows: BTreeMap<String, Vec<String>>,
}

impl ExampleDatabase {
    pub fn from_object_type(ot: &ObjectType) -> Self {
        Self {
            rows: ot
                .attributes
                .iter()
                .map(|a| (a.id.clone(), a.aliases.clone()))
                .collect(),
        }
    }

    pub fn row(&self, attribute_id: &str) -> &[String] {
        self.rows.get(attribute_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_row_len(&self) -> usize {
        self.rows.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }
}

/// The query pair: column name plus sampled values, with the type and entity
/// label derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnQuery {
    pub name: String,
    pub samples: Vec<String>,
    pub dtype: DataType,
    pub verdict: LabelVerdict,
}

impl ColumnQuery {
    /// Declared type wins; otherwise the type is inferred from the samples,
    /// falling back to `String` for sample-free columns.
    pub fn from_column(column: &SourceColumn, labeler: &Labeler, k_max: usize) -> Self {
        let dtype = column
            .declared_dtype
            .or_else(|| crate::ingest::infer_dtype(&column.samples))
            .unwrap_or(DataType::String);
        Self {
            name: column.name.clone(),
            samples: column.samples.clone(),
            dtype,
            verdict: labeler.label_column(column, k_max),
        }
    }

    pub fn label(&self) -> EntityLabel {
        self.verdict.label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerOutcome {
    pub options: OptionDatabase,
    /// The strict filter removed everything, so the input was passed through.
    pub bypassed: bool,
}

pub fn ner_filter(options: &OptionDatabase, query: &ColumnQuery) -> NerOutcome {
    let kept: Vec<OptionEntry> = options
        .options
        .iter()
        .filter(|o| o.dtype == query.dtype && o.entity_label == query.label())
        .cloned()
        .collect();
    if kept.is_empty() {
        NerOutcome {
            options: options.clone(),
            bypassed: true,
        }
    } else {
        NerOutcome {
            options: OptionDatabase {
                object_type: options.object_type.clone(),
                options: kept,
            },
            bypassed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceExample {
    /// Position within the option's exemplar row.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub index: usize,
    pub attribute_id: String,
    pub text: String,
    pub dtype: DataType,
    pub entity_label: EntityLabel,
    pub depth: usize,
    pub examples: Vec<ChoiceExample>,
}

impl ChoiceOption {
    fn from_entry(entry: &OptionEntry, examples: Vec<ChoiceExample>) -> Self {
        Self {
            index: entry.index,
            attribute_id: entry.attribute_id.clone(),
            text: entry.text.clone(),
            dtype: entry.dtype,
            entity_label: entry.entity_label,
            depth: entry.depth,
            examples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerTrace {
    pub query_dtype: DataType,
    pub query_label: EntityLabel,
    pub removed: Vec<String>,
    pub bypassed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOption {
    pub index: usize,
    pub score: f64,
    pub example_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagTrace {
    /// Every option scored, in input order. Example scores are only filled
    /// for kept options.
    pub scores: Vec<ScoredOption>,
    pub removed: Vec<String>,
    pub removed_examples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ner: Option<NerTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub double_rag: Option<RagTrace>,
}

/// The shortlisted options and exemplars that go into a prompt. Options and
/// their exemplars keep database order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedChoices {
    pub object_type: String,
    pub options: Vec<ChoiceOption>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub trace: FilterTrace,
}

impl CompressedChoices {
    /// Every option with every exemplar: the uncompressed arm.
    pub fn full(options: &OptionDatabase, examples: &ExampleDatabase) -> Self {
        Self {
            object_type: options.object_type.clone(),
            options: options
                .options
                .iter()
                .map(|o| ChoiceOption::from_entry(o, all_examples(examples.row(&o.attribute_id))))
                .collect(),
            k1: None,
            k2: None,
            trace: FilterTrace::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn example_count(&self) -> usize {
        self.options.iter().map(|o| o.examples.len()).sum()
    }

    pub fn option(&self, attribute_id: &str) -> Option<&ChoiceOption> {
        self.options.iter().find(|o| o.attribute_id == attribute_id)
    }
}

fn all_examples(row: &[String]) -> Vec<ChoiceExample> {
    row.iter()
        .enumerate()
        .map(|(index, text)| ChoiceExample {
            index,
            text: text.clone(),
        })
        .collect()
}

/// Score with a rank order: higher score first, then lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    score: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Positions of the `k` best scores (ties to the lower position), returned in
/// ascending position order. Bounded min-heap, `O(n log k)`.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
    for (index, &score) in scores.iter().enumerate() {
        let item = Ranked { score, index };
        if heap.len() < k {
            heap.push(Reverse(item));
        } else if let Some(Reverse(worst)) = heap.peek() {
            if item > *worst {
                heap.pop();
                heap.push(Reverse(item));
            }
        }
    }
    let mut kept: Vec<usize> = heap.into_iter().map(|Reverse(r)| r.index).collect();
    kept.sort_unstable();
    kept
}

pub fn double_rag(
    options: &OptionDatabase,
    examples: &ExampleDatabase,
    query: &ColumnQuery,
    measure: &SimilarityMeasure,
    k1: usize,
    k2: usize,
) -> CompressedChoices {
    let option_scores: Vec<f64> = options
        .options
        .iter()
        .map(|o| measure.score(&o.text, &query.name))
        .collect();
    let kept = top_k(&option_scores, k1);

    let mut scored: Vec<ScoredOption> = option_scores
        .iter()
        .zip(&options.options)
        .map(|(&score, o)| ScoredOption {
            index: o.index,
            score,
            example_scores: Vec::new(),
        })
        .collect();

    let mut choices = Vec::with_capacity(kept.len());
    let mut removed_examples = 0usize;
    for &pos in &kept {
        let entry = &options.options[pos];
        let row = examples.row(&entry.attribute_id);
        let ex_scores: Vec<f64> = row.iter().map(|e| measure.score(e, &query.name)).collect();
        let kept_ex = top_k(&ex_scores, k2);
        removed_examples += row.len() - kept_ex.len();
        let ex = kept_ex
            .into_iter()
            .map(|j| ChoiceExample {
                index: j,
                text: row[j].clone(),
            })
            .collect();
        scored[pos].example_scores = ex_scores;
        choices.push(ChoiceOption::from_entry(entry, ex));
    }
    let removed = options
        .options
        .iter()
        .enumerate()
        .filter(|(i, _)| kept.binary_search(i).is_err())
        .map(|(_, o)| o.attribute_id.clone())
        .collect();

    CompressedChoices {
        object_type: options.object_type.clone(),
        options: choices,
        k1: Some(k1),
        k2: Some(k2),
        trace: FilterTrace {
            ner: None,
            double_rag: Some(RagTrace {
                scores: scored,
                removed,
                removed_examples,
            }),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub ner: bool,
    pub double_rag: bool,
    pub k1: usize,
    pub k2: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            ner: true,
            double_rag: true,
            k1: 4,
            k2: 1,
        }
    }
}

impl FilterConfig {
    pub fn none() -> Self {
        Self {
            ner: false,
            double_rag: false,
            ..Self::default()
        }
    }

    pub fn arm_name(&self) -> &'static str {
        match (self.ner, self.double_rag) {
            (false, false) => "no-filter",
            (true, false) => "ner",
            (false, true) => "rag",
            (true, true) => "both",
        }
    }
}

/// Applies the enabled filters in the fixed order entity filter, then
/// retrieval filter.
pub fn compose_filters(
    options: &OptionDatabase,
    examples: &ExampleDatabase,
    query: &ColumnQuery,
    measure: &SimilarityMeasure,
    config: &FilterConfig,
) -> CompressedChoices {
    let mut ner_trace = None;
    let narrowed;
    let stage_input = if config.ner {
        let outcome = ner_filter(options, query);
        ner_trace = Some(NerTrace {
            query_dtype: query.dtype,
            query_label: query.label(),
            removed: options
                .options
                .iter()
                .filter(|o| !outcome.options.options.iter().any(|k| k.index == o.index))
                .map(|o| o.attribute_id.clone())
                .collect(),
            bypassed: outcome.bypassed,
        });
        narrowed = outcome.options;
        &narrowed
    } else {
        options
    };

    let mut choices = if config.double_rag {
        double_rag(stage_input, examples, query, measure, config.k1, config.k2)
    } else {
        CompressedChoices::full(stage_input, examples)
    };
    choices.trace.ner = ner_trace;
    choices
}
