//! Prompt assembly and the prompt-length ledger.
//!
//! A prompt has four sections in fixed order: instruction, numbered options,
//! labelled examples, query. Lengths are counted in whitespace-delimited
//! tokens, and the total decomposes as
//! `L_input = L_instruct + N * (L_option + M * L_example)`
//! where the `L_` terms are mean tokens per line and `M` is the mean number of
//! examples per option.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{ColumnQuery, CompressedChoices};

pub const PLACEHOLDERS: [&str; 4] = ["{instruction}", "{options}", "{examples}", "{query}"];

pub const DEFAULT_LAYOUT: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/templates/match.txt"));
pub const DEFAULT_KEY_LAYOUT: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/templates/key.txt"));

/// `{n}` and `{object_type}` are substituted at render time.
pub const DEFAULT_MATCH_INSTRUCTION: &str = "Match the source attribute in the query to one of the {n} \
target attributes of the {object_type} object type listed below. Answer with the target attribute name only.";
pub const DEFAULT_KEY_INSTRUCTION: &str = "Choose the column that uniquely identifies each {object_type} \
record among the {n} candidate columns below. Answer with the column name only.";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no options to prompt with")]
    NoOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    layout: String,
    instruction: String,
    /// Sample values shown next to the query column name.
    query_samples: usize,
}

impl PromptTemplate {
    pub fn new(layout: impl Into<String>, instruction: impl Into<String>) -> Result<Self, TemplateError> {
        let layout = layout.into();
        if let Some(p) = PLACEHOLDERS.iter().find(|p| !layout.contains(*p)) {
            return Err(TemplateError::MissingPlaceholder(p));
        }
        Ok(Self {
            layout,
            instruction: instruction.into(),
            query_samples: 1,
        })
    }

    pub fn load(path: impl AsRef<Path>, instruction: impl Into<String>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(text, instruction)
    }

    pub fn default_match() -> Self {
        Self::new(DEFAULT_LAYOUT, DEFAULT_MATCH_INSTRUCTION).expect("shipped template")
    }

    pub fn default_key() -> Self {
        Self::new(DEFAULT_KEY_LAYOUT, DEFAULT_KEY_INSTRUCTION).expect("shipped template")
    }

    pub fn with_query_samples(mut self, n: usize) -> Self {
        self.query_samples = n;
        self
    }

    pub fn query_samples(&self) -> usize {
        self.query_samples
    }

    pub fn layout(&self) -> &str {
        &self.layout
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub instruction: String,
    pub option_block: String,
    pub example_block: String,
    pub query_block: String,
    pub rendered: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptBudget {
    pub l_instruct: usize,
    pub l_option: f64,
    pub l_example: f64,
    pub n: usize,
    pub m_effective: f64,
    /// Reconstruction from the components, rounded.
    pub l_input: usize,
    /// Whitespace-token count of the rendered text.
    pub exact_tokens: usize,
}

impl PromptBudget {
    pub fn from_components(l_instruct: usize, n: usize, l_option: f64, m: f64, l_example: f64) -> Self {
        let total = reconstruct(l_instruct, n, l_option, m, l_example);
        let l_input = total.round() as usize;
        Self {
            l_instruct,
            l_option,
            l_example,
            n,
            m_effective: m,
            l_input,
            exact_tokens: l_input,
        }
    }

    pub fn reconstruction(&self) -> f64 {
        reconstruct(self.l_instruct, self.n, self.l_option, self.m_effective, self.l_example)
    }
}

fn reconstruct(l_instruct: usize, n: usize, l_option: f64, m: f64, l_example: f64) -> f64 {
    l_instruct as f64 + n as f64 * (l_option + m * l_example)
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A rendering request independent of where options come from.
struct Sections<'a> {
    instruction: String,
    option_lines: Vec<String>,
    example_lines: Vec<String>,
    query_line: String,
    layout: &'a str,
}

const OPTIONS_HEADER: &str = "Options:";
const EXAMPLES_HEADER: &str = "Examples:";
const QUERY_HEADER: &str = "Query:";

fn block(header: &str, lines: &[String]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let mut s = String::from(header);
    for l in lines {
        s.push('\n');
        s.push_str(l);
    }
    s
}

/// Substitutes placeholders and squeezes runs of blank lines left by empty
/// sections.
fn fill(layout: &str, instruction: &str, options: &str, examples: &str, query: &str) -> String {
    let raw = layout
        .replace("{instruction}", instruction)
        .replace("{options}", options)
        .replace("{examples}", examples)
        .replace("{query}", query);
    let mut out = String::with_capacity(raw.len());
    let mut blank_run = 0;
    for line in raw.trim().lines() {
        if line.trim().is_empty() {
            blank_run += 1;
            if blank_run > 1 {
                continue;
            }
        } else {
            blank_run = 0;
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn render(s: Sections<'_>) -> (Prompt, PromptBudget) {
    let option_block = block(OPTIONS_HEADER, &s.option_lines);
    let example_block = block(EXAMPLES_HEADER, &s.example_lines);
    let query_block = format!("{QUERY_HEADER}\n{}", s.query_line);
    let rendered = fill(s.layout, &s.instruction, &option_block, &example_block, &query_block);

    // Instruction share measured on its own: everything except option and
    // example lines.
    let bare_options = if s.option_lines.is_empty() {
        String::new()
    } else {
        OPTIONS_HEADER.to_string()
    };
    let bare_examples = if s.example_lines.is_empty() {
        String::new()
    } else {
        EXAMPLES_HEADER.to_string()
    };
    let l_instruct = count_tokens(&fill(
        s.layout,
        &s.instruction,
        &bare_options,
        &bare_examples,
        &query_block,
    ));

    let n = s.option_lines.len();
    let ex = s.example_lines.len();
    let opt_tokens: usize = s.option_lines.iter().map(|l| count_tokens(l)).sum();
    let ex_tokens: usize = s.example_lines.iter().map(|l| count_tokens(l)).sum();
    let mean = |total: usize, count: usize| if count == 0 { 0.0 } else { total as f64 / count as f64 };
    let l_option = mean(opt_tokens, n);
    let l_example = mean(ex_tokens, ex);
    let m_effective = mean(ex, n);
    let l_input = reconstruct(l_instruct, n, l_option, m_effective, l_example).round() as usize;

    let budget = PromptBudget {
        l_instruct,
        l_option,
        l_example,
        n,
        m_effective,
        l_input,
        exact_tokens: count_tokens(&rendered),
    };
    let prompt = Prompt {
        instruction: s.instruction,
        option_block,
        example_block,
        query_block,
        rendered,
    };
    (prompt, budget)
}

fn instruction_text(template: &PromptTemplate, n: usize, object_type: &str) -> String {
    template
        .instruction
        .replace("{n}", &n.to_string())
        .replace("{object_type}", object_type)
}

fn query_line(name: &str, samples: &[String], limit: usize) -> String {
    let shown: Vec<&str> = samples
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .take(limit)
        .collect();
    if shown.is_empty() {
        format!("{name} =>")
    } else {
        format!("{name}: {} =>", shown.join(", "))
    }
}

pub fn build_prompt(
    choices: &CompressedChoices,
    query: &ColumnQuery,
    template: &PromptTemplate,
) -> Result<(Prompt, PromptBudget), PromptError> {
    if choices.is_empty() {
        return Err(PromptError::NoOptions);
    }
    let option_lines = choices
        .options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {}", i + 1, o.text))
        .collect();
    let example_lines = choices
        .options
        .iter()
        .flat_map(|o| o.examples.iter().map(move |e| format!("{} => {}", e.text, o.text)))
        .collect();
    Ok(render(Sections {
        instruction: instruction_text(template, choices.len(), &choices.object_type),
        option_lines,
        example_lines,
        query_line: query_line(&query.name, &query.samples, template.query_samples),
        layout: &template.layout,
    }))
}

/// Key-selection prompt: the options are candidate column names, each shown
/// with a sample value; the examples are known key names.
pub fn build_key_prompt(
    object_type: &str,
    candidates: &[(String, Vec<String>)],
    key_exemplars: &[String],
    template: &PromptTemplate,
) -> Result<(Prompt, PromptBudget), PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::NoOptions);
    }
    let option_lines = candidates
        .iter()
        .enumerate()
        .map(|(i, (name, samples))| {
            format!(
                "{}. {}",
                i + 1,
                query_line(name, samples, template.query_samples).trim_end_matches(" =>")
            )
        })
        .collect();
    let example_lines = key_exemplars.iter().map(|k| format!("{k} => key")).collect();
    Ok(render(Sections {
        instruction: instruction_text(template, candidates.len(), object_type),
        option_lines,
        example_lines,
        query_line: "key =>".to_string(),
        layout: &template.layout,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{ChoiceExample, ChoiceOption, FilterTrace};
    use crate::ner::{EntityLabel, LabelVerdict};
    use crate::schema::DataType;

    fn choices(spec: &[(&str, &[&str])]) -> CompressedChoices {
        CompressedChoices {
            object_type: "Profile".into(),
            options: spec
                .iter()
                .enumerate()
                .map(|(i, (text, ex))| ChoiceOption {
                    index: i,
                    attribute_id: text.to_string(),
                    text: text.to_string(),
                    dtype: DataType::String,
                    entity_label: EntityLabel::BusinessName,
                    depth: 1,
                    examples: ex
                        .iter()
                        .enumerate()
                        .map(|(j, e)| ChoiceExample {
                            index: j,
                            text: e.to_string(),
                        })
                        .collect(),
                })
                .collect(),
            k1: None,
            k2: None,
            trace: FilterTrace::default(),
        }
    }

    fn query(name: &str, samples: &[&str]) -> ColumnQuery {
        ColumnQuery {
            name: name.into(),
            samples: samples.iter().map(|s| s.to_string()).collect(),
            dtype: DataType::String,
            verdict: LabelVerdict::free_text(),
        }
    }

    #[test]
    fn two_option_layout() {
        let c = choices(&[("Account", &["account_name"]), ("BusinessName", &["company_name"])]);
        let (p, b) = build_prompt(
            &c,
            &query("contact_name", &["Amazon.com Inc."]),
            &PromptTemplate::default_match(),
        )
        .unwrap();
        let r = &p.rendered;
        let pos = |s: &str| r.find(s).unwrap_or_else(|| panic!("{s} missing from {r}"));
        assert!(pos("Match the source") < pos("1. Account"));
        assert!(pos("1. Account") < pos("2. BusinessName"));
        assert!(pos("2. BusinessName") < pos("account_name => Account"));
        assert!(pos("company_name => BusinessName") < pos("contact_name: Amazon.com Inc. =>"));
        assert!(r.ends_with("contact_name: Amazon.com Inc. =>\n"));
        assert!(r.contains("2 target attributes of the Profile object type"));
        assert_eq!(b.n, 2);
        assert_eq!(b.m_effective, 1.0);
        assert_eq!(b.l_input, b.exact_tokens);
    }

    #[test]
    fn zero_shot_has_no_example_block() {
        let c = choices(&[("Account", &[])]);
        let (p, b) = build_prompt(&c, &query("acct", &[]), &PromptTemplate::default_match()).unwrap();
        assert!(p.example_block.is_empty());
        assert!(!p.rendered.contains(EXAMPLES_HEADER));
        assert!(!p.rendered.contains("\n\n\n"));
        assert!(p.rendered.ends_with("acct =>\n"));
        assert_eq!((b.m_effective, b.l_example), (0.0, 0.0));
    }

    #[test]
    fn query_samples_skip_empties_and_respect_limit() {
        assert_eq!(query_line("a", &["".into(), "x".into(), "y".into()], 1), "a: x =>");
        assert_eq!(query_line("a", &["x".into(), "y".into()], 2), "a: x, y =>");
    }

    #[test]
    fn arithmetic_fixture() {
        assert_eq!(PromptBudget::from_components(40, 4, 3.0, 1.0, 5.0).l_input, 72);
        assert_eq!(PromptBudget::from_components(40, 15, 3.0, 3.0, 5.0).l_input, 310);
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        let e = PromptTemplate::new("{instruction}\n{options}\n{query}", "x").unwrap_err();
        assert!(matches!(e, TemplateError::MissingPlaceholder("{examples}")));
        assert!(matches!(
            build_prompt(&choices(&[]), &query("a", &[]), &PromptTemplate::default_match()),
            Err(PromptError::NoOptions)
        ));
    }

    #[test]
    fn key_prompt_lists_candidates() {
        let (p, _) = build_key_prompt(
            "Order",
            &[("order_id".into(), vec!["7".into()]), ("sku".into(), vec![])],
            &["id".into()],
            &PromptTemplate::default_key(),
        )
        .unwrap();
        assert!(p.rendered.contains("1. order_id: 7\n2. sku\n"));
        assert!(p.rendered.contains("id => key"));
    }
}
