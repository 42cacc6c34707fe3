//! Object-type detection (partitioning input columns by topic) and key
//! detection (nominating a unique record key per group).

use std::collections::HashSet;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{argmax, resolve_answer, BackendError, MatcherBackend};
use crate::prompt::{build_key_prompt, PromptTemplate};
use crate::schema::{ObjectType, SourceColumn};
use crate::similarity::SimilarityMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionGroup {
    pub object_type: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnAffinity {
    pub column: String,
    pub object_type: String,
    /// One score per object type, in schema order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnPartition {
    /// Object type names in schema order; `affinities[*].scores` align with it.
    pub object_types: Vec<String>,
    /// Non-empty groups in schema order, columns in input order.
    pub groups: Vec<PartitionGroup>,
    pub affinities: Vec<ColumnAffinity>,
}

impl ColumnPartition {
    pub fn group_of(&self, column: &str) -> Option<&str> {
        self.affinities
            .iter()
            .find(|a| a.column == column)
            .map(|a| a.object_type.as_str())
    }

    pub fn group(&self, object_type: &str) -> Option<&PartitionGroup> {
        self.groups.iter().find(|g| g.object_type == object_type)
    }
}

/// Affinity of a column name to an object type: the best similarity to any
/// of its attribute names or exemplars.
pub fn affinity(column: &str, object_type: &ObjectType, measure: &SimilarityMeasure) -> f64 {
    object_type
        .attributes
        .iter()
        .flat_map(|a| std::iter::once(&a.name).chain(&a.aliases))
        .map(|t| measure.score(column, t))
        .fold(0.0, f64::max)
}

pub fn detect_object_types(
    columns: &[SourceColumn],
    schema: &[ObjectType],
    measure: &SimilarityMeasure,
) -> ColumnPartition {
    let object_types: Vec<String> = schema.iter().map(|o| o.name.clone()).collect();
    let mut members: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    let mut affinities = Vec::with_capacity(columns.len());
    for c in columns {
        let scores: Vec<f64> = schema.iter().map(|o| affinity(&c.name, o, measure)).collect();
        let Some((best, _)) = argmax(scores.iter().copied()) else {
            continue;
        };
        members[best].push(c.name.clone());
        affinities.push(ColumnAffinity {
            column: c.name.clone(),
            object_type: object_types[best].clone(),
            scores,
        });
    }
    let groups = object_types
        .iter()
        .zip(members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(o, columns)| PartitionGroup {
            object_type: o.clone(),
            columns,
        })
        .collect();
    ColumnPartition {
        object_types,
        groups,
        affinities,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyAction {
    Keep,
    Drop,
}

/// A rule as written in configuration: a `*` glob (case-insensitive) or a
/// regular expression prefixed with `re:`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRuleSpec {
    pub pattern: String,
    pub action: KeyAction,
}

impl KeyRuleSpec {
    pub fn keep(pattern: &str) -> Self {
        Self {
            pattern: pattern.into(),
            action: KeyAction::Keep,
        }
    }

    pub fn drop(pattern: &str) -> Self {
        Self {
            pattern: pattern.into(),
            action: KeyAction::Drop,
        }
    }
}

#[derive(Debug, Error)]
#[error("invalid key rule pattern `{pattern}`: {source}")]
pub struct KeyRuleError {
    pub pattern: String,
    #[source]
    pub source: regex::Error,
}

#[derive(Debug, Clone)]
pub struct KeyRule {
    pub spec: KeyRuleSpec,
    regex: Regex,
}

impl KeyRule {
    pub fn compile(spec: KeyRuleSpec) -> Result<Self, KeyRuleError> {
        let built = match spec.pattern.strip_prefix("re:") {
            Some(re) => Regex::new(re),
            None => {
                let body: Vec<String> = spec.pattern.split('*').map(regex::escape).collect();
                RegexBuilder::new(&format!("^{}$", body.join(".*")))
                    .case_insensitive(true)
                    .build()
            }
        };
        let regex = built.map_err(|source| KeyRuleError {
            pattern: spec.pattern.clone(),
            source,
        })?;
        Ok(Self { spec, regex })
    }

    pub fn compile_all(specs: &[KeyRuleSpec]) -> Result<Vec<Self>, KeyRuleError> {
        specs.iter().cloned().map(Self::compile).collect()
    }

    pub fn matches(&self, name: &str) -> bool {
        self.regex.is_match(name)
    }
}

pub fn default_key_rules() -> Vec<KeyRuleSpec> {
    ["*id", "*key", "*number", "*code", "*uuid"]
        .into_iter()
        .map(KeyRuleSpec::keep)
        .collect()
}

pub fn default_key_exemplars() -> Vec<String> {
    ["id", "key", "uuid", "identifier", "record_id"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// Position of the first matching rule and its action; `None` when no rule
/// matches, which means drop.
pub fn first_match(name: &str, rules: &[KeyRule]) -> Option<(usize, KeyAction)> {
    rules
        .iter()
        .enumerate()
        .find(|(_, r)| r.matches(name))
        .map(|(i, r)| (i, r.spec.action))
}

pub fn filter_key_candidates(columns: &[SourceColumn], rules: &[KeyRule]) -> Vec<String> {
    columns
        .iter()
        .filter(|c| matches!(first_match(&c.name, rules), Some((_, KeyAction::Keep))))
        .map(|c| c.name.clone())
        .collect()
}

/// Distinct non-empty values over non-empty values; 0 when there are none.
pub fn uniqueness_ratio(samples: &[String]) -> f64 {
    let values: Vec<&str> = samples.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&str> = values.iter().copied().collect();
    distinct.len() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyVerdict {
    pub column: String,
    pub object_type: String,
    pub is_key: bool,
    pub uniqueness_ratio: f64,
    pub rationale: String,
}

#[derive(Debug, Clone)]
pub struct KeySettings<'a> {
    pub rules: &'a [KeyRule],
    pub threshold: f64,
    pub exemplars: &'a [String],
    pub template: &'a PromptTemplate,
}

/// Key verdicts for every column of one object-type group, in input order.
/// At most one column is marked as key.
pub fn detect_keys(
    object_type: &str,
    columns: &[SourceColumn],
    settings: &KeySettings<'_>,
    backend: &MatcherBackend,
) -> Result<Vec<KeyVerdict>, BackendError> {
    let mut verdicts: Vec<KeyVerdict> = columns
        .iter()
        .map(|c| {
            let ratio = uniqueness_ratio(&c.samples);
            let rationale = match first_match(&c.name, settings.rules) {
                None => "no key rule matched".to_string(),
                Some((i, KeyAction::Drop)) => format!("dropped by rule {} ({})", i + 1, settings.rules[i].spec.pattern),
                Some((i, KeyAction::Keep)) if ratio < settings.threshold => format!(
                    "kept by rule {} but uniqueness {:.3} is below {:.3}",
                    i + 1,
                    ratio,
                    settings.threshold
                ),
                Some((i, KeyAction::Keep)) => format!("eligible (rule {})", i + 1),
            };
            KeyVerdict {
                column: c.name.clone(),
                object_type: object_type.to_string(),
                is_key: false,
                uniqueness_ratio: ratio,
                rationale,
            }
        })
        .collect();
    let eligible: Vec<usize> = verdicts
        .iter()
        .enumerate()
        .filter(|(_, v)| v.rationale.starts_with("eligible"))
        .map(|(i, _)| i)
        .collect();

    let chosen = match (eligible.len(), backend) {
        (0, _) => None,
        (1, _) => Some((eligible[0], "only eligible candidate".to_string())),
        (_, MatcherBackend::Oracle(measure)) => {
            let scores = eligible.iter().map(|&i| {
                settings
                    .exemplars
                    .iter()
                    .map(|e| measure.score(&columns[i].name, e))
                    .fold(0.0, f64::max)
            });
            argmax(scores).map(|(j, s)| (eligible[j], format!("closest to key exemplars ({s:.3})")))
        }
        (_, MatcherBackend::Llm(client)) => {
            let candidates: Vec<(String, Vec<String>)> = eligible
                .iter()
                .map(|&i| (columns[i].name.clone(), columns[i].samples.clone()))
                .collect();
            let (prompt, _) = build_key_prompt(object_type, &candidates, settings.exemplars, settings.template)
                .map_err(|e| BackendError::Config(e.to_string()))?;
            let raw = client.complete(&prompt.rendered)?;
            let texts: Vec<(&str, &str)> = candidates.iter().map(|(n, _)| (n.as_str(), n.as_str())).collect();
            match resolve_answer(&raw, &texts) {
                Some((j, _)) => Some((eligible[j], "selected by backend".to_string())),
                None => {
                    for &i in &eligible {
                        verdicts[i].rationale = "backend answer did not name a candidate".into();
                    }
                    None
                }
            }
        }
    };
    if let Some((i, why)) = chosen {
        verdicts[i].is_key = true;
        verdicts[i].rationale = why;
    }
    Ok(verdicts)
}
