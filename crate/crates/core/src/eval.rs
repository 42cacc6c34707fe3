//! Evaluation harness: labelled corpora, accuracy per domain, filter
//! ablations, k-shot sweeps, prefix perturbation, throughput, and two
//! classical baselines.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{FilterConfig, OptionDatabase};
use crate::ingest::infer_dtype;
use crate::matcher::argmax;
use crate::pipeline::Pipeline;
use crate::schema::{DataType, MappingResult, ObjectType, Provenance, SourceColumn};
use crate::similarity::{embedding_cosine, sorensen_dice, token_dice, tokenize_identifier, WordVectorTable};

mod generator;

pub use generator::{generate_corpus, generate_default_corpora, perfect_alias_corpus, DomainSpec, DOMAINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCase {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<DataType>,
    #[serde(default)]
    pub samples: Vec<String>,
    pub object_type: String,
    /// Ground-truth attribute id.
    pub truth: String,
}

impl LabeledCase {
    pub fn column(&self) -> SourceColumn {
        SourceColumn {
            name: self.name.clone(),
            declared_dtype: self.dtype,
            samples: self.samples.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub domain: String,
    pub cases: Vec<LabeledCase>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("case `{case}` in domain {domain}: {message}")]
    BadCase {
        domain: String,
        case: String,
        message: String,
    },
    #[error("unknown object type `{0}`")]
    UnknownObjectType(String),
}

impl LabeledCorpus {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| EvalError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// Every case's object type and ground truth must exist in the schema.
    pub fn validate(&self, schema: &[ObjectType]) -> Result<(), EvalError> {
        for c in &self.cases {
            let bad = |message: String| EvalError::BadCase {
                domain: self.domain.clone(),
                case: c.name.clone(),
                message,
            };
            let ot = schema
                .iter()
                .find(|o| o.name == c.object_type)
                .ok_or_else(|| bad(format!("unknown object type `{}`", c.object_type)))?;
            if ot.attribute(&c.truth).is_none() {
                return Err(bad(format!("truth `{}` is not an attribute of {}", c.truth, ot.name)));
            }
        }
        Ok(())
    }
}

/// Copy with every column name prefixed; labels untouched.
pub fn perturb_prefix(corpus: &LabeledCorpus, prefix: &str) -> LabeledCorpus {
    LabeledCorpus {
        domain: corpus.domain.clone(),
        cases: corpus
            .cases
            .iter()
            .map(|c| LabeledCase {
                name: format!("{prefix}{}", c.name),
                ..c.clone()
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatcherSpec {
    Pipeline { filters: FilterConfig },
    Cupid { w_struct: f64 },
    Lsd,
}

impl MatcherSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Pipeline { filters } => filters.arm_name().to_string(),
            Self::Cupid { w_struct } => format!("cupid(w={w_struct})"),
            Self::Lsd => "lsd".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub domain: String,
    pub name: String,
    pub truth: String,
    pub predicted: Option<String>,
    pub correct: bool,
    /// The matcher errored; counted as incorrect.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_input: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_input_unfiltered: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain: String,
    pub total: usize,
    pub correct: usize,
    pub failures: usize,
    /// Percent.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub domains: Vec<DomainScore>,
    /// Unweighted mean of the per-domain accuracies.
    pub average: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_l_input: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_l_input_unfiltered: Option<f64>,
    pub columns: usize,
    pub seconds: f64,
    pub columns_per_sec: f64,
    pub cases: Vec<CaseOutcome>,
}

impl EvalRow {
    pub fn domain(&self, name: &str) -> Option<&DomainScore> {
        self.domains.iter().find(|d| d.domain == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Fixed-width table: one line per row, one column per domain.
    pub fn table(&self) -> String {
        let mut domains: Vec<&str> = Vec::new();
        for r in &self.rows {
            for d in &r.domains {
                if !domains.contains(&d.domain.as_str()) {
                    domains.push(&d.domain);
                }
            }
        }
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<name_w$}", "matcher");
        for d in &domains {
            out.push_str(&format!(" {:>10}", d));
        }
        out.push_str(&format!(" {:>8} {:>9} {:>9}\n", "avg", "L_input", "cols/s"));
        for r in &self.rows {
            out.push_str(&format!("{:<name_w$}", r.name));
            for d in &domains {
                match r.domain(d) {
                    Some(s) => out.push_str(&format!(" {:>10.2}", s.accuracy)),
                    None => out.push_str(&format!(" {:>10}", "-")),
                }
            }
            let l = r.mean_l_input.map(|l| format!("{l:.1}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {:>8.2} {:>9} {:>9.1}\n", r.average, l, r.columns_per_sec));
        }
        out
    }
}

struct Flat<'a> {
    domain: &'a str,
    case: &'a LabeledCase,
}

fn flatten(corpora: &[LabeledCorpus]) -> Vec<Flat<'_>> {
    corpora
        .iter()
        .flat_map(|c| {
            c.cases.iter().map(move |case| Flat {
                domain: &c.domain,
                case,
            })
        })
        .collect()
}

fn run_case(pipeline: &Pipeline, spec: &MatcherSpec, f: &Flat<'_>) -> CaseOutcome {
    let mut out = CaseOutcome {
        domain: f.domain.to_string(),
        name: f.case.name.clone(),
        truth: f.case.truth.clone(),
        predicted: None,
        correct: false,
        failed: false,
        l_input: None,
        l_input_unfiltered: None,
    };
    let Some(ot) = pipeline.schema().iter().position(|o| o.name == f.case.object_type) else {
        out.failed = true;
        return out;
    };
    let column = f.case.column();
    let result = match spec {
        MatcherSpec::Pipeline { .. } => {
            let o = pipeline.map_column(&column, ot);
            if let Some(l) = o.ledger {
                out.l_input = Some(l.filtered.l_input);
                out.l_input_unfiltered = Some(l.unfiltered.l_input);
            }
            out.failed = o.error.is_some() || o.result.error.is_some();
            o.result
        }
        MatcherSpec::Cupid { w_struct } => {
            let opts = OptionDatabase::from_object_type(&pipeline.schema()[ot]);
            baseline_cupid(&column, &opts, *w_struct)
        }
        MatcherSpec::Lsd => {
            let opts = OptionDatabase::from_object_type(&pipeline.schema()[ot]);
            baseline_lsd(&column, &opts, pipeline.measure().vectors().map(|v| v.as_ref()))
        }
    };
    out.correct = !out.failed && result.predicted_attribute.as_deref() == Some(f.case.truth.as_str());
    out.predicted = result.predicted_attribute;
    out
}

fn mean(values: impl Iterator<Item = usize>) -> Option<f64> {
    let (sum, n) = values.fold((0usize, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Builds a report row from a case log.
pub fn summarize(name: &str, cases: Vec<CaseOutcome>, seconds: f64) -> EvalRow {
    let mut domains: Vec<DomainScore> = Vec::new();
    for c in &cases {
        let d = match domains.iter_mut().find(|d| d.domain == c.domain) {
            Some(d) => d,
            None => {
                domains.push(DomainScore {
                    domain: c.domain.clone(),
                    total: 0,
                    correct: 0,
                    failures: 0,
                    accuracy: 0.0,
                });
                domains.last_mut().expect("just pushed")
            }
        };
        d.total += 1;
        d.correct += usize::from(c.correct);
        d.failures += usize::from(c.failed);
    }
    for d in &mut domains {
        d.accuracy = 100.0 * d.correct as f64 / d.total as f64;
    }
    let average = if domains.is_empty() {
        0.0
    } else {
        domains.iter().map(|d| d.accuracy).sum::<f64>() / domains.len() as f64
    };
    let columns = cases.len();
    EvalRow {
        name: name.to_string(),
        average,
        mean_l_input: mean(cases.iter().filter_map(|c| c.l_input)),
        mean_l_input_unfiltered: mean(cases.iter().filter_map(|c| c.l_input_unfiltered)),
        columns,
        seconds,
        columns_per_sec: if seconds > 0.0 { columns as f64 / seconds } else { 0.0 },
        domains,
        cases,
    }
}

/// Runs one matcher over every case of every corpus.
pub fn eval_matcher(corpora: &[LabeledCorpus], pipeline: &Pipeline, spec: &MatcherSpec) -> EvalRow {
    let configured;
    let pipeline = match spec {
        MatcherSpec::Pipeline { filters } => {
            configured = pipeline.clone().with_filters(*filters);
            &configured
        }
        _ => pipeline,
    };
    let flat = flatten(corpora);
    let start = Instant::now();
    let cases = pipeline.execution().map(&flat, |f| run_case(pipeline, spec, f));
    summarize(&spec.label(), cases, start.elapsed().as_secs_f64())
}

/// One row per filter arm over identical inputs.
pub fn ablation(corpora: &[LabeledCorpus], pipeline: &Pipeline, arms: &[FilterConfig]) -> EvalReport {
    EvalReport {
        rows: arms
            .iter()
            .map(|&filters| eval_matcher(corpora, pipeline, &MatcherSpec::Pipeline { filters }))
            .collect(),
    }
}

/// The four standard arms with the pipeline's k1 and k2.
pub fn standard_arms(base: FilterConfig) -> Vec<FilterConfig> {
    [(false, false), (true, false), (false, true), (true, true)]
        .into_iter()
        .map(|(ner, double_rag)| FilterConfig {
            ner,
            double_rag,
            ..base
        })
        .collect()
}

/// One row per distinct shot count, retrieval filter forced on with `k2`
/// set to the shot count.
pub fn sweep_kshot(corpora: &[LabeledCorpus], pipeline: &Pipeline, shots: &[usize]) -> EvalReport {
    let mut seen = Vec::new();
    for &s in shots {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    let base = pipeline.filters();
    EvalReport {
        rows: seen
            .into_iter()
            .map(|k2| {
                let filters = FilterConfig {
                    double_rag: true,
                    k2,
                    ..base
                };
                let mut row = eval_matcher(corpora, pipeline, &MatcherSpec::Pipeline { filters });
                row.name = format!("k2={k2}");
                row
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub prefix: String,
    pub baseline: EvalRow,
    pub perturbed: EvalRow,
    /// Perturbed minus baseline average accuracy, in points.
    pub delta: f64,
}

pub fn prefix_robustness(
    corpora: &[LabeledCorpus],
    pipeline: &Pipeline,
    spec: &MatcherSpec,
    prefix: &str,
) -> PerturbationReport {
    let baseline = eval_matcher(corpora, pipeline, spec);
    let perturbed_corpora: Vec<LabeledCorpus> = corpora.iter().map(|c| perturb_prefix(c, prefix)).collect();
    let mut perturbed = eval_matcher(&perturbed_corpora, pipeline, spec);
    perturbed.name = format!("{} +{prefix}", perturbed.name);
    PerturbationReport {
        prefix: prefix.to_string(),
        delta: perturbed.average - baseline.average,
        baseline,
        perturbed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub arm: String,
    pub columns: usize,
    pub seconds: f64,
    pub columns_per_sec: f64,
    pub mean_l_input: f64,
}

pub fn measure_throughput(corpora: &[LabeledCorpus], pipeline: &Pipeline, filters: FilterConfig) -> Throughput {
    let row = eval_matcher(corpora, pipeline, &MatcherSpec::Pipeline { filters });
    Throughput {
        arm: row.name,
        columns: row.columns,
        seconds: row.seconds,
        columns_per_sec: row.columns_per_sec,
        mean_l_input: row.mean_l_input.unwrap_or(0.0),
    }
}

fn source_dtype(source: &SourceColumn) -> DataType {
    source
        .declared_dtype
        .or_else(|| infer_dtype(&source.samples))
        .unwrap_or(DataType::String)
}

fn baseline_result(source: &SourceColumn, options: &OptionDatabase, scores: &[f64]) -> MappingResult {
    match argmax(scores.iter().copied()) {
        Some((i, s)) => MappingResult {
            source: source.name.clone(),
            object_type: options.object_type.clone(),
            predicted_attribute: Some(options.options[i].attribute_id.clone()),
            confidence: s,
            provenance: Provenance::Oracle,
            error: None,
        },
        None => MappingResult::unmapped(&source.name, &options.object_type, Provenance::Oracle),
    }
}

/// Weighted structural and linguistic similarity per option. Structural
/// similarity averages a data-type match indicator with depth agreement
/// `1 / (1 + |depth - 1|)`, a flat source column sitting at depth 1.
/// Linguistic similarity is Dice over identifier tokens.
pub fn cupid_scores(source: &SourceColumn, options: &OptionDatabase, w_struct: f64) -> Vec<f64> {
    let dtype = source_dtype(source);
    options
        .options
        .iter()
        .map(|o| {
            let type_match = if o.dtype == dtype { 1.0 } else { 0.0 };
            let depth = 1.0 / (1.0 + (o.depth as f64 - 1.0).abs());
            let ssim = (type_match + depth) / 2.0;
            let lsim = token_dice(&source.name, &o.text);
            w_struct * ssim + (1.0 - w_struct) * lsim
        })
        .collect()
}

pub fn baseline_cupid(source: &SourceColumn, options: &OptionDatabase, w_struct: f64) -> MappingResult {
    baseline_result(source, options, &cupid_scores(source, options, w_struct))
}

pub const LSD_NAME_BONUS: f64 = 0.5;

/// Mean of embedding cosine (mapped to `[0, 1]`, zero when out of
/// vocabulary) and bigram Dice, plus a bonus when the identifier token sets
/// are equal.
pub fn lsd_scores(source: &SourceColumn, options: &OptionDatabase, table: Option<&WordVectorTable>) -> Vec<f64> {
    let src_tokens = token_set(&source.name);
    options
        .options
        .iter()
        .map(|o| {
            let cos = table.map_or(0.0, |t| embedding_cosine(&source.name, &o.text, t).score);
            let dice = sorensen_dice(&source.name, &o.text);
            let bonus = if !src_tokens.is_empty() && src_tokens == token_set(&o.text) {
                LSD_NAME_BONUS
            } else {
                0.0
            };
            (cos + dice) / 2.0 + bonus
        })
        .collect()
}

fn token_set(s: &str) -> std::collections::BTreeSet<String> {
    tokenize_identifier(s).into_iter().collect()
}

pub fn baseline_lsd(source: &SourceColumn, options: &OptionDatabase, table: Option<&WordVectorTable>) -> MappingResult {
    baseline_result(source, options, &lsd_scores(source, options, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::EntityLabel;
    use crate::schema::TargetAttribute;

    fn opts(spec: &[(&str, DataType, usize)]) -> OptionDatabase {
        OptionDatabase::from_object_type(&ObjectType {
            name: "T".into(),
            description: String::new(),
            attributes: spec
                .iter()
                .map(|(id, dtype, depth)| TargetAttribute {
                    id: id.to_string(),
                    name: id.to_string(),
                    dtype: *dtype,
                    entity_label: EntityLabel::FreeText,
                    aliases: vec![],
                    node_path: (0..*depth).map(|i| format!("n{i}")).collect(),
                })
                .collect(),
        })
    }

    #[test]
    fn cupid_endpoints() {
        let o = opts(&[
            ("Foo", DataType::String, 1),
            ("Bar", DataType::Integer, 1),
            ("OrderId", DataType::Integer, 1),
        ]);
        let src = SourceColumn::new("order_id", vec![]).with_dtype(DataType::Integer);
        assert_eq!(
            baseline_cupid(&src, &o, 0.0).predicted_attribute.as_deref(),
            Some("OrderId")
        );
        // pure structure: first dtype match
        assert_eq!(
            baseline_cupid(&src, &o, 1.0).predicted_attribute.as_deref(),
            Some("Bar")
        );
    }

    #[test]
    fn lsd_exact_name_dominates_and_oov_reduces_to_dice() {
        let o = opts(&[("PhoneNumber", DataType::String, 1), ("Tel", DataType::String, 1)]);
        let src = SourceColumn::new("phone_number", vec![]);
        assert_eq!(
            baseline_lsd(&src, &o, None).predicted_attribute.as_deref(),
            Some("PhoneNumber")
        );
        let src = SourceColumn::new("tell", vec![]);
        let table = WordVectorTable::parse("zzz 1 0".as_bytes()).unwrap();
        let with = lsd_scores(&src, &o, Some(&table));
        let dice: Vec<f64> = o.options.iter().map(|x| sorensen_dice("tell", &x.text) / 2.0).collect();
        assert_eq!(with, dice);
    }

    #[test]
    fn prefix_perturbation() {
        let c = LabeledCorpus {
            domain: "Person".into(),
            cases: vec![LabeledCase {
                name: "first_name".into(),
                dtype: None,
                samples: vec![],
                object_type: "Profile".into(),
                truth: "FirstName".into(),
            }],
        };
        let p = perturb_prefix(&c, "XYZ_");
        assert_eq!(p.cases[0].name, "XYZ_first_name");
        assert_eq!(p.cases[0].truth, "FirstName");
        assert_eq!(perturb_prefix(&c, ""), c);
        assert_eq!(perturb_prefix(&p, "XYZ_").cases[0].name, "XYZ_XYZ_first_name");
    }

    #[test]
    fn summarize_counts_and_averages() {
        let case = |domain: &str, correct: bool, failed: bool| CaseOutcome {
            domain: domain.into(),
            name: "n".into(),
            truth: "t".into(),
            predicted: None,
            correct,
            failed,
            l_input: Some(10),
            l_input_unfiltered: None,
        };
        let row = summarize(
            "x",
            vec![case("A", true, false), case("A", false, true), case("B", true, false)],
            0.0,
        );
        assert_eq!(row.domain("A").unwrap().accuracy, 50.0);
        assert_eq!(row.domain("A").unwrap().failures, 1);
        assert_eq!(row.average, 75.0);
        assert_eq!(row.columns_per_sec, 0.0);
        assert_eq!(row.mean_l_input, Some(10.0));
        let empty = summarize("e", vec![], 0.0);
        assert_eq!(
            (empty.average, empty.columns_per_sec, empty.mean_l_input),
            (0.0, 0.0, None)
        );
    }
}
