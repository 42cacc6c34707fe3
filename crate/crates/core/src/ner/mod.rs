//! Sequence-level entity labeling of column values.
//!
//! A column is labeled by running a deterministic rule chain over each of its
//! first `k` sample values and taking the plurality label over the non-empty
//! ones. Rules are ordered from high-precision patterns (email, URL, card
//! numbers, timestamps) down to dictionary lookups, and the first rule that
//! fires decides the value's label.

mod lexicon;
mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use lexicon::{normalize, Lexicon, Lexicons};

use crate::schema::SourceColumn;

/// Upper bound on the number of values serialized into one labeling sequence.
pub const MAX_SEQUENCE_VALUES: usize = 6;

pub const SEQ_START: &str = "<s>";
pub const SEQ_END: &str = "</s>";
pub const SEQ_SEP: &str = "[SEP]";

/// Fine-grained entity labels. Declaration order is the taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityLabel {
    FirstName,
    MiddleName,
    LastName,
    FullName,
    BusinessName,
    ProductName,
    Dates,
    Gender,
    Email,
    URL,
    CreditCardNumber,
    Timestamps,
    AddressLine,
    City,
    ProvinceState,
    Country,
    ZipPostalCode,
    PhoneNumber,
    Prices,
    Currencies,
    WeightsUnits,
    FreeText,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 22] = [
        EntityLabel::FirstName,
        EntityLabel::MiddleName,
        EntityLabel::LastName,
        EntityLabel::FullName,
        EntityLabel::BusinessName,
        EntityLabel::ProductName,
        EntityLabel::Dates,
        EntityLabel::Gender,
        EntityLabel::Email,
        EntityLabel::URL,
        EntityLabel::CreditCardNumber,
        EntityLabel::Timestamps,
        EntityLabel::AddressLine,
        EntityLabel::City,
        EntityLabel::ProvinceState,
        EntityLabel::Country,
        EntityLabel::ZipPostalCode,
        EntityLabel::PhoneNumber,
        EntityLabel::Prices,
        EntityLabel::Currencies,
        EntityLabel::WeightsUnits,
        EntityLabel::FreeText,
    ];

    /// Order in which the value rules are tried. Plurality ties between
    /// labels are also resolved by this order, so pattern-based labels win
    /// over dictionary-based ones.
    pub const RULE_ORDER: [EntityLabel; 22] = [
        EntityLabel::Email,
        EntityLabel::URL,
        EntityLabel::CreditCardNumber,
        EntityLabel::Timestamps,
        EntityLabel::Dates,
        EntityLabel::PhoneNumber,
        EntityLabel::ZipPostalCode,
        EntityLabel::Prices,
        EntityLabel::Currencies,
        EntityLabel::WeightsUnits,
        EntityLabel::Gender,
        EntityLabel::ProvinceState,
        EntityLabel::Country,
        EntityLabel::City,
        EntityLabel::AddressLine,
        EntityLabel::BusinessName,
        EntityLabel::FullName,
        EntityLabel::FirstName,
        EntityLabel::LastName,
        EntityLabel::MiddleName,
        EntityLabel::ProductName,
        EntityLabel::FreeText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::FirstName => "FirstName",
            EntityLabel::MiddleName => "MiddleName",
            EntityLabel::LastName => "LastName",
            EntityLabel::FullName => "FullName",
            EntityLabel::BusinessName => "BusinessName",
            EntityLabel::ProductName => "ProductName",
            EntityLabel::Dates => "Dates",
            EntityLabel::Gender => "Gender",
            EntityLabel::Email => "Email",
            EntityLabel::URL => "URL",
            EntityLabel::CreditCardNumber => "CreditCardNumber",
            EntityLabel::Timestamps => "Timestamps",
            EntityLabel::AddressLine => "AddressLine",
            EntityLabel::City => "City",
            EntityLabel::ProvinceState => "ProvinceState",
            EntityLabel::Country => "Country",
            EntityLabel::ZipPostalCode => "ZipPostalCode",
            EntityLabel::PhoneNumber => "PhoneNumber",
            EntityLabel::Prices => "Prices",
            EntityLabel::Currencies => "Currencies",
            EntityLabel::WeightsUnits => "WeightsUnits",
            EntityLabel::FreeText => "FreeText",
        }
    }

    fn precedence(self) -> usize {
        Self::RULE_ORDER
            .iter()
            .position(|l| *l == self)
            .expect("every label has a rule position")
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for EntityLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let alias = match key.as_str() {
            "date" => Some(EntityLabel::Dates),
            "timestamp" => Some(EntityLabel::Timestamps),
            "price" => Some(EntityLabel::Prices),
            "currency" => Some(EntityLabel::Currencies),
            "zipcode" | "zip" | "postalcode" => Some(EntityLabel::ZipPostalCode),
            "phone" => Some(EntityLabel::PhoneNumber),
            _ => None,
        };
        alias
            .or_else(|| Self::ALL.into_iter().find(|l| l.as_str().to_ascii_lowercase() == key))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for EntityLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EntityLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// `<s>v1[SEP]v2[SEP]...vk</s>`
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SerializedSequence {
    pub text: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("cannot serialize an empty sample list")]
    Empty,
    #[error("k_max must be in 1..={MAX_SEQUENCE_VALUES}, got {0}")]
    BadLength(usize),
}

pub fn serialize_samples(samples: &[String], k_max: usize) -> Result<SerializedSequence, SequenceError> {
    if !(1..=MAX_SEQUENCE_VALUES).contains(&k_max) {
        return Err(SequenceError::BadLength(k_max));
    }
    if samples.is_empty() {
        return Err(SequenceError::Empty);
    }
    let k = samples.len().min(k_max);
    let text = format!("{SEQ_START}{}{SEQ_END}", samples[..k].join(SEQ_SEP));
    Ok(SerializedSequence { text, k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVerdict {
    pub label: EntityLabel,
    pub per_value_labels: Vec<EntityLabel>,
    pub confidence: f64,
}

impl LabelVerdict {
    pub fn free_text() -> Self {
        Self {
            label: EntityLabel::FreeText,
            per_value_labels: Vec::new(),
            confidence: 0.0,
        }
    }
}

/// Rule/dictionary labeler. Immutable once built, so one instance can be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct Labeler {
    lexicons: Lexicons,
}

impl Default for Labeler {
    fn default() -> Self {
        Self::new(Lexicons::builtin())
    }
}

impl Labeler {
    pub fn new(lexicons: Lexicons) -> Self {
        Self { lexicons }
    }

    pub fn lexicons(&self) -> &Lexicons {
        &self.lexicons
    }

    pub fn label_value(&self, value: &str) -> EntityLabel {
        rules::label(value.trim(), &self.lexicons)
    }

    /// Labels the first `k_max` samples (clamped to `1..=6`) and aggregates
    /// by plurality over the non-empty ones.
    pub fn label_column(&self, column: &SourceColumn, k_max: usize) -> LabelVerdict {
        let k = k_max.clamp(1, MAX_SEQUENCE_VALUES);
        let window = &column.samples[..column.samples.len().min(k)];
        let per_value_labels: Vec<EntityLabel> = window.iter().map(|v| self.label_value(v)).collect();

        let mut counts = [0usize; 22];
        let mut non_empty = 0usize;
        for (value, label) in window.iter().zip(&per_value_labels) {
            if value.trim().is_empty() {
                continue;
            }
            non_empty += 1;
            counts[label.precedence()] += 1;
        }
        if non_empty == 0 {
            return LabelVerdict {
                label: EntityLabel::FreeText,
                per_value_labels,
                confidence: 0.0,
            };
        }
        // max_by_key keeps the last maximum; iterate in reverse precedence so
        // the earliest rule wins ties.
        let (best, count) = counts
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, c)| **c)
            .map(|(i, c)| (EntityLabel::RULE_ORDER[i], *c))
            .expect("non-empty");
        LabelVerdict {
            label: best,
            per_value_labels,
            confidence: count as f64 / non_empty as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeler() -> Labeler {
        Labeler::default()
    }

    fn col(values: &[&str]) -> SourceColumn {
        SourceColumn::new("c", values.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn serializes_with_separators() {
        let s = serialize_samples(&["a".into(), "b".into()], 6).unwrap();
        assert_eq!(s.text, "<s>a[SEP]b</s>");
        assert_eq!(s.k, 2);
        let s = serialize_samples(&["x".into()], 1).unwrap();
        assert_eq!(s.text, "<s>x</s>");
        let ten: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let s = serialize_samples(&ten, 6).unwrap();
        assert_eq!(s.k, 6);
        assert_eq!(s.text.matches(SEQ_SEP).count(), 5);
        assert_eq!(serialize_samples(&[], 3), Err(SequenceError::Empty));
        assert_eq!(serialize_samples(&ten, 7), Err(SequenceError::BadLength(7)));
    }

    #[test]
    fn label_names_round_trip() {
        for l in EntityLabel::ALL {
            assert_eq!(l.as_str().parse::<EntityLabel>().unwrap(), l);
        }
        assert_eq!(
            "Zip/PostalCode".parse::<EntityLabel>().unwrap(),
            EntityLabel::ZipPostalCode
        );
        assert_eq!(
            "Province/State".parse::<EntityLabel>().unwrap(),
            EntityLabel::ProvinceState
        );
        assert_eq!(
            "Weights/units".parse::<EntityLabel>().unwrap(),
            EntityLabel::WeightsUnits
        );
        assert!("Planet".parse::<EntityLabel>().is_err());
    }

    #[test]
    fn rule_order_covers_every_label_once() {
        let mut sorted = EntityLabel::RULE_ORDER.to_vec();
        sorted.sort();
        assert_eq!(sorted, EntityLabel::ALL.to_vec());
        assert_eq!(EntityLabel::RULE_ORDER.last(), Some(&EntityLabel::FreeText));
    }

    #[test]
    fn city_column_ignores_empties() {
        let v = labeler().label_column(&col(&["Seattle", "", "Boston"]), 6);
        assert_eq!(v.label, EntityLabel::City);
        assert_eq!(v.confidence, 1.0);
        assert_eq!(v.per_value_labels.len(), 3);
    }

    #[test]
    fn tie_prefers_earlier_rule() {
        let v = labeler().label_column(&col(&["98101", "Seattle"]), 6);
        assert_eq!(v.label, EntityLabel::ZipPostalCode);
        assert_eq!(v.confidence, 0.5);
        let v = labeler().label_column(&col(&["Seattle", "98101"]), 6);
        assert_eq!(v.label, EntityLabel::ZipPostalCode);
    }

    #[test]
    fn degenerate_columns() {
        let v = labeler().label_column(&col(&["", " ", ""]), 6);
        assert_eq!(v.label, EntityLabel::FreeText);
        assert_eq!(v.confidence, 0.0);
        let v = labeler().label_column(&col(&[]), 6);
        assert_eq!(v, LabelVerdict::free_text());
    }

    #[test]
    fn only_first_k_values_are_labeled() {
        let v = labeler().label_column(&col(&["Seattle", "a@b.com", "c@d.com"]), 1);
        assert_eq!(v.label, EntityLabel::City);
        assert_eq!(v.per_value_labels.len(), 1);
    }

    proptest! {
        #[test]
        fn verdict_is_permutation_invariant(
            mut values in proptest::collection::vec(
                prop::sample::select(vec!["Seattle", "Boston", "98101", "x@y.org", "", "hello"]), 1..7),
            seed in any::<u64>(),
        ) {
            let l = labeler();
            let base = l.label_column(&SourceColumn::new("c", values.iter().map(|s| s.to_string()).collect()), 6);
            // deterministic shuffle
            let n = values.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                values.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled = l.label_column(&SourceColumn::new("c", values.iter().map(|s| s.to_string()).collect()), 6);
            // ties resolve by rule precedence, not position, so even tied
            // verdicts are permutation-invariant
            prop_assert_eq!(base.label, shuffled.label);
            prop_assert_eq!(base.confidence, shuffled.confidence);
        }
    }
}
