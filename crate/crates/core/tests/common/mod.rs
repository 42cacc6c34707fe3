//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use schemamatch_core::filters::{ColumnQuery, CompressedChoices};
use schemamatch_core::ner::LabelVerdict;
use schemamatch_core::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/fixtures")
        .join(name)
}

pub fn profile_pipeline() -> Pipeline {
    Pipeline::from_config(PipelineConfig::with_schema(fixture("profile_schema.json"))).unwrap()
}

pub fn demo_pipeline() -> Pipeline {
    Pipeline::from_config(PipelineConfig::load(fixture("demo_config.json")).unwrap()).unwrap()
}

pub fn wide_table() -> Vec<SourceColumn> {
    schemamatch_core::ingest::ingest_csv(fixture("wide50.csv"), 6)
        .unwrap()
        .columns
}

const SYLLABLES: [&str; 12] = [
    "ph", "one", "tel", "mail", "e", "addr", "id", "no", "cust", "name", "_", "x",
];

/// Short identifiers from a small alphabet, so scores tie often.
pub fn random_identifier<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=4);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

pub fn random_query<R: Rng>(rng: &mut R) -> ColumnQuery {
    let dtype = *DataType::ALL.choose(rng).unwrap();
    let label = *EntityLabel::ALL[..4].choose(rng).unwrap();
    ColumnQuery {
        name: random_identifier(rng),
        samples: vec![],
        dtype,
        verdict: LabelVerdict {
            label,
            per_value_labels: vec![],
            confidence: 1.0,
        },
    }
}

/// An object type with `n` attributes and up to `m` exemplars each. Types
/// and labels come from small pools so the entity filter both keeps and
/// drops options.
pub fn random_object_type<R: Rng>(rng: &mut R, n: usize, m: usize) -> ObjectType {
    ObjectType {
        name: "T".into(),
        description: String::new(),
        attributes: (0..n)
            .map(|i| TargetAttribute {
                id: format!("A{i}"),
                name: random_identifier(rng),
                dtype: *DataType::ALL.choose(rng).unwrap(),
                entity_label: *EntityLabel::ALL[..4].choose(rng).unwrap(),
                aliases: (0..rng.random_range(0..=m)).map(|_| random_identifier(rng)).collect(),
                node_path: vec![],
            })
            .collect(),
    }
}

/// Random vectors for the syllables and a few whole words. Identifiers that
/// tokenize to nothing known are out of vocabulary and score 0.
pub fn random_vectors<R: Rng>(rng: &mut R) -> Arc<WordVectorTable> {
    let entries = SYLLABLES
        .iter()
        .chain(["phone", "email", "name"].iter())
        .map(|s| (s.to_string(), (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect()));
    Arc::new(WordVectorTable::from_entries(8, entries).unwrap())
}

/// Positions of the `k` best scores by full sort: score descending, then
/// position ascending. Returned in ascending position order.
pub fn sort_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Retrieval filter computed by brute force, as (attribute id, exemplar
/// texts) pairs.
pub fn sort_oracle(
    opts: &OptionDatabase,
    ex: &ExampleDatabase,
    query: &ColumnQuery,
    measure: &SimilarityMeasure,
    k1: usize,
    k2: usize,
) -> Vec<(String, Vec<String>)> {
    let scores: Vec<f64> = opts
        .options
        .iter()
        .map(|o| measure.score(&o.text, &query.name))
        .collect();
    sort_top_k(&scores, k1)
        .into_iter()
        .map(|i| {
            let o = &opts.options[i];
            let row = ex.row(&o.attribute_id);
            let s: Vec<f64> = row.iter().map(|e| measure.score(e, &query.name)).collect();
            (
                o.attribute_id.clone(),
                sort_top_k(&s, k2).into_iter().map(|j| row[j].clone()).collect(),
            )
        })
        .collect()
}

pub fn flatten(c: &CompressedChoices) -> Vec<(String, Vec<String>)> {
    c.options
        .iter()
        .map(|o| {
            (
                o.attribute_id.clone(),
                o.examples.iter().map(|e| e.text.clone()).collect(),
            )
        })
        .collect()
}

/// The entity filter as a set comprehension, with the empty-result bypass.
pub fn ner_comprehension(opts: &OptionDatabase, query: &ColumnQuery) -> (Vec<String>, bool) {
    let kept: Vec<String> = opts
        .options
        .iter()
        .filter(|o| o.dtype == query.dtype && o.entity_label == query.label())
        .map(|o| o.attribute_id.clone())
        .collect();
    if kept.is_empty() {
        (opts.options.iter().map(|o| o.attribute_id.clone()).collect(), true)
    } else {
        (kept, false)
    }
}
