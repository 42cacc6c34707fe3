//! Seeded synthetic corpora: column-name variants drawn from attribute
//! aliases, values drawn from templates and lexicons and kept only when the
//! labeler agrees with the attribute's entity label.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EvalError, LabeledCase, LabeledCorpus};
use crate::ingest::DEFAULT_SAMPLE_LIMIT;
use crate::ner::{EntityLabel, Labeler};
use crate::schema::{DataType, ObjectType, TargetAttribute};
use crate::similarity::tokenize_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSpec {
    pub domain: &'static str,
    pub object_type: &'static str,
    /// Default number of cases.
    pub size: usize,
}

pub const DOMAINS: [DomainSpec; 4] = [
    DomainSpec {
        domain: "Person",
        object_type: "Profile",
        size: 1400,
    },
    DomainSpec {
        domain: "Sales",
        object_type: "Order",
        size: 400,
    },
    DomainSpec {
        domain: "Products",
        object_type: "Product",
        size: 200,
    },
    DomainSpec {
        domain: "Tickets",
        object_type: "Ticket",
        size: 330,
    },
];

const PREFIXES: [&str; 6] = ["cust_", "src_", "tbl_", "x_", "raw_", "c_"];
const STREET_NAMES: [&str; 10] = [
    "Maple", "Oak", "Pine", "Cedar", "Lake", "Hill", "Park", "Terry", "Elm", "Main",
];
const STREET_TYPES: [&str; 6] = ["St", "Ave", "Rd", "Blvd", "Lane", "Drive"];
const MODELS: [&str; 8] = ["Pro", "Air", "Max", "Ultra", "Mini", "Plus", "Lite", "Edge"];
const WORDS: [&str; 24] = [
    "cannot", "login", "after", "update", "refund", "request", "package", "damaged", "slow", "response", "invoice",
    "missing", "wrong", "size", "please", "help", "screen", "broken", "battery", "lasts", "great", "quality",
    "delivery", "delayed",
];
const STATUSES: [&str; 7] = [
    "open",
    "pending",
    "shipped",
    "closed",
    "resolved",
    "in progress",
    "cancelled",
];
const PRIORITIES: [&str; 6] = ["low", "medium", "high", "urgent", "P1", "P2"];

fn title(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct Vocab {
    given: Vec<String>,
    surnames: Vec<String>,
    cities: Vec<String>,
    states: Vec<String>,
    countries: Vec<String>,
    suffixes: Vec<String>,
    genders: Vec<String>,
    currencies: Vec<String>,
    brands: Vec<String>,
}

impl Vocab {
    fn new(labeler: &Labeler) -> Self {
        let lex = labeler.lexicons();
        let list = |l: &crate::ner::Lexicon| l.sorted().into_iter().map(String::from).collect::<Vec<_>>();
        Self {
            given: list(&lex.given_names),
            surnames: list(&lex.surnames),
            cities: list(&lex.cities),
            states: list(&lex.states).into_iter().filter(|s| s.len() > 2).collect(),
            countries: list(&lex.countries),
            suffixes: list(&lex.corporate_suffixes),
            genders: list(&lex.genders).into_iter().filter(|s| s.len() > 1).collect(),
            currencies: list(&lex.currencies)
                .into_iter()
                .filter(|c| c.len() == 3 && c.chars().all(|ch| ch.is_ascii_alphabetic()))
                .collect(),
            brands: list(&lex.brands),
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> &'a str {
    items.choose(rng).map(String::as_str).unwrap_or("x")
}

fn pick_str<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or("x")
}

fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| pick_str(rng, &WORDS)).collect::<Vec<_>>().join(" ")
}

fn candidate<R: Rng>(attr: &TargetAttribute, v: &Vocab, rng: &mut R) -> String {
    use EntityLabel::*;
    match attr.entity_label {
        BusinessName => format!("{} {}", title(pick(rng, &v.surnames)), title(pick(rng, &v.suffixes))),
        FirstName => title(pick(rng, &v.given)),
        MiddleName => format!("{}.", rng.random_range(b'A'..=b'Z') as char),
        LastName => title(pick(rng, &v.surnames)),
        FullName => format!("{} {}", title(pick(rng, &v.given)), title(pick(rng, &v.surnames))),
        Dates => format!(
            "{:04}-{:02}-{:02}",
            rng.random_range(1950..2021),
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        ),
        Timestamps => format!(
            "2023-{:02}-{:02}T{:02}:{:02}:{:02}",
            rng.random_range(1..=12),
            rng.random_range(1..=28),
            rng.random_range(0..24),
            rng.random_range(0..60),
            rng.random_range(0..60)
        ),
        Gender => title(pick(rng, &v.genders)),
        PhoneNumber => format!("({}) 555-{:04}", rng.random_range(201..990), rng.random_range(0..10000)),
        Email => format!("{}.{}@example.com", pick(rng, &v.given), pick(rng, &v.surnames)),
        URL => format!("https://shop.example.com/p/{}", rng.random_range(1000..99999)),
        AddressLine => format!(
            "{} {} {}",
            rng.random_range(1..9999),
            pick_str(rng, &STREET_NAMES),
            pick_str(rng, &STREET_TYPES)
        ),
        City => title(pick(rng, &v.cities)),
        ProvinceState => title(pick(rng, &v.states)),
        Country => title(pick(rng, &v.countries)),
        ZipPostalCode => format!("{:05}", rng.random_range(10000..99999)),
        Prices => format!("{}.{:02}", rng.random_range(1..2000), rng.random_range(0..100)),
        Currencies => pick(rng, &v.currencies).to_uppercase(),
        WeightsUnits => format!(
            "{}{}",
            rng.random_range(1..100),
            pick_str(rng, &["lbs", "kg", "oz", " g", " lb"])
        ),
        ProductName => format!(
            "{} {} {}",
            title(pick(rng, &v.brands)),
            pick_str(rng, &MODELS),
            rng.random_range(2..20)
        ),
        CreditCardNumber => "4111111111111111".to_string(),
        FreeText => free_text(attr, v, rng),
    }
}

fn free_text<R: Rng>(attr: &TargetAttribute, v: &Vocab, rng: &mut R) -> String {
    let id = attr.id.to_lowercase();
    match attr.dtype {
        DataType::Integer if id.contains("quantity") || id.contains("qty") => rng.random_range(1..50).to_string(),
        DataType::Integer => rng.random_range(100_000..1_000_000).to_string(),
        DataType::Float => format!("{:.3}", rng.random_range(0.0..100.0)),
        _ if id.contains("status") => pick_str(rng, &STATUSES).to_string(),
        _ if id.contains("priority") => pick_str(rng, &PRIORITIES).to_string(),
        _ if id.contains("sku") || id.contains("code") => format!("SKU-{:05}", rng.random_range(0..100_000)),
        _ if id.contains("brand") => title(pick(rng, &v.brands)),
        _ => words(rng, 3, 7),
    }
}

/// A value the labeler assigns to the attribute's label. Gives up after a
/// bounded number of draws and returns the last one.
fn value<R: Rng>(attr: &TargetAttribute, v: &Vocab, labeler: &Labeler, rng: &mut R) -> String {
    let mut last = String::new();
    for _ in 0..64 {
        last = candidate(attr, v, rng);
        if labeler.label_value(&last) == attr.entity_label {
            break;
        }
    }
    last
}

fn name_variant<R: Rng>(attr: &TargetAttribute, rng: &mut R) -> String {
    let mut bases: Vec<&str> = attr.aliases.iter().map(String::as_str).collect();
    bases.push(&attr.name);
    let base = pick_str(rng, &bases);
    let tokens = tokenize_identifier(base);
    let styled = match rng.random_range(0..4) {
        0 => tokens.join("_"),
        1 => tokens
            .iter()
            .enumerate()
            .map(|(i, t)| if i == 0 { t.clone() } else { title(t) })
            .collect(),
        2 => tokens.join("_").to_uppercase(),
        _ => tokens.iter().map(|t| title(t)).collect(),
    };
    if rng.random_bool(0.25) {
        format!("{}{styled}", pick_str(rng, &PREFIXES))
    } else {
        styled
    }
}

/// `size` cases for one object type, attributes visited round-robin.
pub fn generate_corpus(
    schema: &[ObjectType],
    domain: &str,
    object_type: &str,
    size: usize,
    seed: u64,
    labeler: &Labeler,
) -> Result<LabeledCorpus, EvalError> {
    let ot = schema
        .iter()
        .find(|o| o.name == object_type)
        .ok_or_else(|| EvalError::UnknownObjectType(object_type.to_string()))?;
    let vocab = Vocab::new(labeler);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(size);
    for i in 0..size {
        let Some(attr) = ot.attributes.get(i % ot.attributes.len().max(1)) else {
            break;
        };
        let samples = (0..DEFAULT_SAMPLE_LIMIT)
            .map(|_| value(attr, &vocab, labeler, &mut rng))
            .collect();
        cases.push(LabeledCase {
            name: name_variant(attr, &mut rng),
            dtype: Some(attr.dtype),
            samples,
            object_type: ot.name.clone(),
            truth: attr.id.clone(),
        });
    }
    Ok(LabeledCorpus {
        domain: domain.to_string(),
        cases,
    })
}

/// One corpus per standard domain, sizes scaled by `scale`. Domains whose
/// object type is absent from the schema are skipped.
pub fn generate_default_corpora(schema: &[ObjectType], seed: u64, scale: f64, labeler: &Labeler) -> Vec<LabeledCorpus> {
    DOMAINS
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let size = ((d.size as f64 * scale).round() as usize).max(1);
            generate_corpus(
                schema,
                d.domain,
                d.object_type,
                size,
                seed.wrapping_add(i as u64),
                labeler,
            )
            .ok()
        })
        .collect()
}

/// One case per (attribute, alias) whose column name is exactly the alias.
pub fn perfect_alias_corpus(
    schema: &[ObjectType],
    domain: &str,
    object_type: &str,
    labeler: &Labeler,
) -> Result<LabeledCorpus, EvalError> {
    let ot = schema
        .iter()
        .find(|o| o.name == object_type)
        .ok_or_else(|| EvalError::UnknownObjectType(object_type.to_string()))?;
    let vocab = Vocab::new(labeler);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cases = ot
        .attributes
        .iter()
        .flat_map(|a| a.aliases.iter().map(move |alias| (a, alias)))
        .map(|(a, alias)| LabeledCase {
            name: alias.clone(),
            dtype: Some(a.dtype),
            samples: (0..DEFAULT_SAMPLE_LIMIT)
                .map(|_| value(a, &vocab, labeler, &mut rng))
                .collect(),
            object_type: ot.name.clone(),
            truth: a.id.clone(),
        })
        .collect();
    Ok(LabeledCorpus {
        domain: domain.to_string(),
        cases,
    })
}
