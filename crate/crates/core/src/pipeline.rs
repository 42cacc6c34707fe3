//! The three-stage workflow: partition columns by object type, map each column
//! within its object type, then nominate keys per group.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{
    default_key_exemplars, default_key_rules, detect_keys, detect_object_types, KeyRule, KeyRuleError, KeyRuleSpec,
    KeySettings,
};
use crate::exec::{Execution, DEFAULT_CONCURRENCY};
use crate::filters::{compose_filters, ColumnQuery, CompressedChoices, ExampleDatabase, FilterConfig, OptionDatabase};
use crate::ingest::DEFAULT_SAMPLE_LIMIT;
use crate::matcher::{BackendConfig, BackendError, MatcherBackend};
use crate::ner::{Labeler, Lexicons, MAX_SEQUENCE_VALUES};
use crate::prompt::{build_prompt, PromptError, PromptTemplate, DEFAULT_KEY_INSTRUCTION, DEFAULT_MATCH_INSTRUCTION};
use crate::schema::{load_target_schema, MappingResult, ObjectType, SchemaError, SourceColumn};
use crate::session::{LedgerEntry, MappingSession};
use crate::similarity::{MeasureKind, SimilarityMeasure, VectorError, WordVectorTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ner,
    #[serde(alias = "rag")]
    DoubleRag,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    #[serde(default)]
    pub match_template: Option<PathBuf>,
    #[serde(default)]
    pub key_template: Option<PathBuf>,
    #[serde(default)]
    pub match_instruction: Option<String>,
    #[serde(default)]
    pub key_instruction: Option<String>,
}

/// Pipeline settings as read from a JSON file. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: PathBuf,
    /// Directory of lexicon files; missing files fall back to the built-in lists.
    #[serde(default)]
    pub lexicons: Option<PathBuf>,
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    /// Defaults to embedding cosine when `vectors` is set, Dice otherwise.
    #[serde(default)]
    pub measure: Option<MeasureKind>,
    #[serde(default = "yes")]
    pub strip_separators: bool,
    #[serde(default = "default_k1")]
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterKind>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_sample_limit")]
    pub sample_limit: usize,
    #[serde(default = "default_query_samples")]
    pub query_samples: usize,
    #[serde(default = "default_key_rules")]
    pub key_rules: Vec<KeyRuleSpec>,
    #[serde(default = "default_key_threshold")]
    pub key_threshold: f64,
    #[serde(default = "default_key_exemplars")]
    pub key_exemplars: Vec<String>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub templates: TemplateConfig,
}

fn yes() -> bool {
    true
}
fn default_k1() -> usize {
    4
}
fn default_k2() -> usize {
    1
}
fn default_filters() -> Vec<FilterKind> {
    vec![FilterKind::Ner, FilterKind::DoubleRag]
}
fn default_sample_limit() -> usize {
    DEFAULT_SAMPLE_LIMIT
}
fn default_query_samples() -> usize {
    1
}
fn default_key_threshold() -> f64 {
    1.0
}
fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("sessions")
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("cannot load lexicons: {0}")]
    Lexicons(std::io::Error),
    #[error(transparent)]
    Vectors(#[from] VectorError),
    #[error(transparent)]
    KeyRule(#[from] KeyRuleError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
}

impl PipelineConfig {
    /// Defaults for everything except the schema path.
    pub fn with_schema(schema: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({ "schema": schema.into() })).expect("defaults deserialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.schema);
        fix(&mut self.data_dir);
        for p in [
            self.lexicons.as_mut(),
            self.vectors.as_mut(),
            self.templates.match_template.as_mut(),
            self.templates.key_template.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            ner: self.filters.contains(&FilterKind::Ner),
            double_rag: self.filters.contains(&FilterKind::DoubleRag),
            k1: self.k1,
            k2: self.k2,
        }
    }

    pub fn set_filters(&mut self, filters: FilterConfig) {
        self.filters = [
            (filters.ner, FilterKind::Ner),
            (filters.double_rag, FilterKind::DoubleRag),
        ]
        .into_iter()
        .filter_map(|(on, k)| on.then_some(k))
        .collect();
        self.k1 = filters.k1;
        self.k2 = filters.k2;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.k1 < 1 {
            return bad("k1 must be at least 1".into());
        }
        if !(1..=MAX_SEQUENCE_VALUES).contains(&self.sample_limit) {
            return bad(format!("sample_limit must be in 1..={MAX_SEQUENCE_VALUES}"));
        }
        if self.query_samples > self.sample_limit {
            return bad("query_samples cannot exceed sample_limit".into());
        }
        if !(0.0..=1.0).contains(&self.key_threshold) {
            return bad("key_threshold must be in [0, 1]".into());
        }
        if self.concurrency < 1 {
            return bad("concurrency must be at least 1".into());
        }
        if self.measure == Some(MeasureKind::EmbeddingCosine) && self.vectors.is_none() {
            return bad("embedding measure needs a vectors file".into());
        }
        for (what, p) in [
            ("schema", Some(&self.schema)),
            ("lexicons", self.lexicons.as_ref()),
            ("vectors", self.vectors.as_ref()),
            ("match_template", self.templates.match_template.as_ref()),
            ("key_template", self.templates.key_template.as_ref()),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{what} path {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}

/// Loaded, immutable pipeline state. Cheap to share behind an `Arc`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    schema: Vec<ObjectType>,
    databases: Vec<(OptionDatabase, ExampleDatabase)>,
    labeler: Labeler,
    measure: SimilarityMeasure,
    backend: MatcherBackend,
    match_template: PromptTemplate,
    key_template: PromptTemplate,
    key_rules: Vec<KeyRule>,
    filters: FilterConfig,
    execution: Execution,
}

/// What happened to one column in stage 2.
#[derive(Debug, Clone)]
pub struct ColumnOutcome {
    pub result: MappingResult,
    pub ledger: Option<LedgerEntry>,
    pub error: Option<BackendError>,
}

impl Pipeline {
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let schema = load_target_schema(&config.schema)?;
        let lexicons = match &config.lexicons {
            Some(dir) => Lexicons::from_dir(dir).map_err(PipelineError::Lexicons)?,
            None => Lexicons::builtin(),
        };
        let vectors = match &config.vectors {
            Some(p) => Some(Arc::new(WordVectorTable::load(p)?)),
            None => None,
        };
        Self::from_parts(config, schema, lexicons, vectors)
    }

    /// Builds a pipeline around an already loaded schema. The config's schema
    /// path is not read.
    pub fn from_parts(
        config: PipelineConfig,
        schema: Vec<ObjectType>,
        lexicons: Lexicons,
        vectors: Option<Arc<WordVectorTable>>,
    ) -> Result<Self, PipelineError> {
        crate::schema::validate(&schema)?;
        let kind = config.measure.unwrap_or(if vectors.is_some() {
            MeasureKind::EmbeddingCosine
        } else {
            MeasureKind::SorensenDice
        });
        let measure = match (kind, vectors) {
            (MeasureKind::EmbeddingCosine, Some(v)) => SimilarityMeasure::embedding(v),
            (MeasureKind::EmbeddingCosine, None) => {
                return Err(PipelineError::Config("embedding measure needs a vectors file".into()))
            }
            (MeasureKind::BigramJaccard, _) => SimilarityMeasure::jaccard(),
            (MeasureKind::SorensenDice, _) => SimilarityMeasure::dice(),
        }
        .strip_separators(config.strip_separators);

        let load_template = |path: &Option<PathBuf>,
                             instruction: &Option<String>,
                             default: fn() -> PromptTemplate,
                             default_instruction: &str| {
            let t = match path {
                Some(p) => PromptTemplate::load(
                    p,
                    instruction.clone().unwrap_or_else(|| default_instruction.to_string()),
                ),
                None => match instruction {
                    Some(i) => PromptTemplate::new(default().layout(), i.clone()),
                    None => Ok(default()),
                },
            };
            t.map(|t| t.with_query_samples(config.query_samples))
                .map_err(|e| PipelineError::Prompt(e.into()))
        };
        let match_template = load_template(
            &config.templates.match_template,
            &config.templates.match_instruction,
            PromptTemplate::default_match,
            DEFAULT_MATCH_INSTRUCTION,
        )?;
        let key_template = load_template(
            &config.templates.key_template,
            &config.templates.key_instruction,
            PromptTemplate::default_key,
            DEFAULT_KEY_INSTRUCTION,
        )?;

        let backend = MatcherBackend::from_config(&config.backend, &measure)?;
        let databases = schema
            .iter()
            .map(|o| {
                (
                    OptionDatabase::from_object_type(o),
                    ExampleDatabase::from_object_type(o),
                )
            })
            .collect();
        Ok(Self {
            key_rules: KeyRule::compile_all(&config.key_rules)?,
            filters: config.filter_config(),
            execution: Execution::with_cap(config.concurrency),
            labeler: Labeler::new(lexicons),
            schema,
            databases,
            measure,
            backend,
            match_template,
            key_template,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn schema(&self) -> &[ObjectType] {
        &self.schema
    }

    pub fn measure(&self) -> &SimilarityMeasure {
        &self.measure
    }

    pub fn labeler(&self) -> &Labeler {
        &self.labeler
    }

    pub fn filters(&self) -> FilterConfig {
        self.filters
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn backend(&self) -> &MatcherBackend {
        &self.backend
    }

    pub fn with_backend(mut self, backend: MatcherBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_filters(mut self, filters: FilterConfig) -> Self {
        self.filters = filters;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn object_type_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|o| o.name == name)
    }

    pub fn query(&self, column: &SourceColumn) -> ColumnQuery {
        ColumnQuery::from_column(column, &self.labeler, self.config.sample_limit)
    }

    /// The compressed choices for a column mapped into `object_type`.
    pub fn choices(&self, query: &ColumnQuery, object_type: usize, filters: &FilterConfig) -> CompressedChoices {
        let (opts, ex) = &self.databases[object_type];
        compose_filters(opts, ex, query, &self.measure, filters)
    }

    /// Stage 2 for one column: filters, prompt, backend, answer parsing.
    pub fn map_column(&self, column: &SourceColumn, object_type: usize) -> ColumnOutcome {
        let ot = &self.schema[object_type].name;
        let query = self.query(column);
        let choices = self.choices(&query, object_type, &self.filters);
        let (opts, ex) = &self.databases[object_type];
        let full = CompressedChoices::full(opts, ex);
        let built = build_prompt(&choices, &query, &self.match_template)
            .and_then(|f| build_prompt(&full, &query, &self.match_template).map(|u| (f, u)));
        let ((prompt, filtered), (_, unfiltered)) = match built {
            Ok(b) => b,
            Err(e) => {
                let mut r = MappingResult::unmapped(&column.name, ot, provenance(&self.backend));
                r.error = Some(e.to_string());
                return ColumnOutcome {
                    result: r,
                    ledger: None,
                    error: None,
                };
            }
        };
        let ledger = LedgerEntry {
            column: column.name.clone(),
            object_type: ot.clone(),
            filtered,
            unfiltered,
            ner_bypassed: choices.trace.ner.as_ref().is_some_and(|n| n.bypassed),
        };
        match self.backend.resolve(&choices, &query, &prompt) {
            Ok(result) => ColumnOutcome {
                result,
                ledger: Some(ledger),
                error: None,
            },
            Err(e) => {
                let mut r = MappingResult::unmapped(&column.name, ot, provenance(&self.backend));
                r.error = Some(e.to_string());
                ColumnOutcome {
                    result: r,
                    ledger: Some(ledger),
                    error: Some(e),
                }
            }
        }
    }

    /// Runs all three stages. Backend outages stop stage 2 for the remaining
    /// columns and skip stage 3; the partial session records the errors.
    pub fn run(&self, columns: &[SourceColumn]) -> Result<MappingSession, PipelineError> {
        let mut seen = HashSet::new();
        for c in columns {
            if !seen.insert(c.name.as_str()) {
                return Err(PipelineError::DuplicateColumn(c.name.clone()));
            }
        }
        let columns: Vec<SourceColumn> = columns
            .iter()
            .map(|c| SourceColumn {
                samples: c.samples.iter().take(self.config.sample_limit).cloned().collect(),
                ..c.clone()
            })
            .collect();
        let mut session = MappingSession::new(columns.clone(), self.filters);

        // Stage 1
        let partition = detect_object_types(&columns, &self.schema, &self.measure);
        let tasks: Vec<(usize, usize)> = columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                partition
                    .group_of(&c.name)
                    .and_then(|ot| self.object_type_index(ot))
                    .map(|o| (i, o))
            })
            .collect();

        // Stage 2
        let abort = AtomicBool::new(false);
        let outcomes = self.execution.map(&tasks, |&(i, o)| {
            let c = &columns[i];
            if abort.load(Ordering::Relaxed) {
                let mut r = MappingResult::unmapped(&c.name, &self.schema[o].name, provenance(&self.backend));
                r.error = Some("skipped: backend unavailable".into());
                return ColumnOutcome {
                    result: r,
                    ledger: None,
                    error: None,
                };
            }
            let out = self.map_column(c, o);
            if out.error.as_ref().is_some_and(BackendError::is_unavailable) {
                abort.store(true, Ordering::Relaxed);
            }
            out
        });
        for out in outcomes {
            if let Some(e) = &out.error {
                session.errors.push(format!("{}: {e}", out.result.source));
            }
            session.ledger.extend(out.ledger);
            session.mappings.push(out.result);
        }
        let aborted = abort.load(Ordering::Relaxed);
        if aborted {
            session.errors.push("stage 2 aborted: backend unavailable".into());
        }

        // Stage 3
        if !aborted {
            let settings = KeySettings {
                rules: &self.key_rules,
                threshold: self.config.key_threshold,
                exemplars: &self.config.key_exemplars,
                template: &self.key_template,
            };
            for g in &partition.groups {
                let group: Vec<SourceColumn> = columns
                    .iter()
                    .filter(|c| g.columns.contains(&c.name))
                    .cloned()
                    .collect();
                match detect_keys(&g.object_type, &group, &settings, &self.backend) {
                    Ok(v) => session.keys.extend(v),
                    Err(e) => session.errors.push(format!("key detection for {}: {e}", g.object_type)),
                }
            }
        }

        session.partition = partition;
        session.machine_mappings = session.mappings.clone();
        Ok(session)
    }
}

fn provenance(backend: &MatcherBackend) -> crate::schema::Provenance {
    if backend.is_oracle() {
        crate::schema::Provenance::Oracle
    } else {
        crate::schema::Provenance::Llm
    }
}
