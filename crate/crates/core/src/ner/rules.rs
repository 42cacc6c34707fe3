use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveDateTime};
use regex::Regex;

use super::lexicon::{Lexicon, Lexicons};
use super::EntityLabel;

static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}$").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(https?|ftp)://[^\s/$.?#][^\s]*$").unwrap());
static CARD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d[\d -]{11,22}\d$").unwrap());
static TIMESTAMP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4}-\d{2}-\d{2})[T ](\d{2}:\d{2}:\d{2})(\.\d+)?(Z|[+-]\d{2}:?\d{2})?$").unwrap());
static PHONE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\+?\(?\d[\d\s().-]*\d(\s*(x|ext\.?)\s*\d{1,5})?$").unwrap());
static ZIP_PLUS4: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{5}-\d{4}$").unwrap());
static ZIP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{5}(-\d{4})?|[A-Za-z]\d[A-Za-z] ?\d[A-Za-z]\d|[A-Za-z]{1,2}\d[A-Za-z\d]? ?\d[A-Za-z]{2})$")
        .unwrap()
});
static AMOUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?(\d{1,3}(,\d{3})+|\d+)(\.\d{1,4})?$").unwrap());
static BARE_PRICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+\.\d{2}$").unwrap());
static QUANTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+(\.\d+)?)\s*([A-Za-z][A-Za-z ]*)$").unwrap());
static ADDRESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+[A-Za-z]?(-\d+)?\s+\S").unwrap());
static PO_BOX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^p\.?\s?o\.?\s+box\s+\d+$").unwrap());
static INITIAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z]\.?$").unwrap());
static NAME_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z][A-Za-z'-]*$").unwrap());

const DATE_FORMATS: [&str; 11] = [
    "%Y-%m-%d",
    "%Y/%m/%d",
    "%m/%d/%Y",
    "%d/%m/%Y",
    "%m-%d-%Y",
    "%d-%m-%Y",
    "%d.%m.%Y",
    "%d %b %Y",
    "%d %B %Y",
    "%b %d, %Y",
    "%B %d, %Y",
];

pub(super) fn label(value: &str, lex: &Lexicons) -> EntityLabel {
    if value.is_empty() {
        return EntityLabel::FreeText;
    }
    EntityLabel::RULE_ORDER
        .into_iter()
        .find(|l| matches(*l, value, lex))
        .unwrap_or(EntityLabel::FreeText)
}

fn matches(label: EntityLabel, v: &str, lex: &Lexicons) -> bool {
    match label {
        EntityLabel::Email => EMAIL.is_match(v),
        EntityLabel::URL => URL.is_match(v),
        EntityLabel::CreditCardNumber => is_card_number(v),
        EntityLabel::Timestamps => is_timestamp(v),
        EntityLabel::Dates => DATE_FORMATS.iter().any(|f| NaiveDate::parse_from_str(v, f).is_ok()),
        EntityLabel::PhoneNumber => {
            PHONE.is_match(v)
                && !ZIP_PLUS4.is_match(v)
                && (7..=15).contains(&v.chars().filter(char::is_ascii_digit).count())
        }
        EntityLabel::ZipPostalCode => ZIP.is_match(v),
        EntityLabel::Prices => is_price(v, &lex.currencies),
        EntityLabel::Currencies => lex.currencies.contains(v),
        EntityLabel::WeightsUnits => QUANTITY.captures(v).is_some_and(|c| lex.units.contains(&c[3])),
        EntityLabel::Gender => lex.genders.contains(v),
        EntityLabel::ProvinceState => place_match(v, &lex.states),
        EntityLabel::Country => place_match(v, &lex.countries),
        EntityLabel::City => lex.cities.contains(v),
        EntityLabel::AddressLine => is_address(v, &lex.street_words),
        EntityLabel::BusinessName => has_corporate_suffix(v, &lex.corporate_suffixes),
        EntityLabel::FullName => is_full_name(v, lex),
        EntityLabel::FirstName => single_token(v).is_some_and(|t| lex.given_names.contains(t)),
        EntityLabel::LastName => single_token(v).is_some_and(|t| lex.surnames.contains(t)),
        EntityLabel::MiddleName => INITIAL.is_match(v),
        EntityLabel::ProductName => {
            let mut tokens = v.split_whitespace();
            tokens.next().is_some_and(|b| lex.brands.contains(b)) && tokens.next().is_some()
        }
        EntityLabel::FreeText => true,
    }
}

fn is_card_number(v: &str) -> bool {
    if !CARD.is_match(v) {
        return false;
    }
    let digits: Vec<u32> = v.chars().filter_map(|c| c.to_digit(10)).collect();
    (13..=19).contains(&digits.len()) && luhn(&digits)
}

fn luhn(digits: &[u32]) -> bool {
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, d)| {
            if i % 2 == 1 {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                *d
            }
        })
        .sum();
    sum.is_multiple_of(10)
}

fn is_timestamp(v: &str) -> bool {
    let Some(c) = TIMESTAMP.captures(v) else {
        return false;
    };
    let joined = format!("{} {}", &c[1], &c[2]);
    NaiveDateTime::parse_from_str(&joined, "%Y-%m-%d %H:%M:%S").is_ok()
}

fn is_price(v: &str, currencies: &Lexicon) -> bool {
    if BARE_PRICE.is_match(v) {
        return true;
    }
    // currency marker as prefix or suffix, e.g. "$12.29", "12.29$", "USD 5"
    for split in v.char_indices().map(|(i, _)| i).skip(1) {
        let (head, tail) = v.split_at(split);
        if currencies.contains(head) && AMOUNT.is_match(tail.trim()) {
            return true;
        }
        if AMOUNT.is_match(head.trim()) && currencies.contains(tail) {
            return true;
        }
    }
    false
}

/// Two-letter entries (state and country codes) only match upper-case input,
/// so words like "in" or "or" stay free text.
fn place_match(v: &str, lexicon: &Lexicon) -> bool {
    if v.chars().count() <= 2 && v.chars().any(|c| c.is_lowercase()) {
        return false;
    }
    lexicon.contains(v)
}

fn is_address(v: &str, street_words: &Lexicon) -> bool {
    if PO_BOX.is_match(v) {
        return true;
    }
    ADDRESS.is_match(v)
        && v.split_whitespace()
            .skip(1)
            .any(|t| street_words.contains(t.trim_matches(|c: char| c == '.' || c == ',' || c == '#')))
}

fn has_corporate_suffix(v: &str, suffixes: &Lexicon) -> bool {
    let tokens: Vec<&str> = v.split_whitespace().collect();
    tokens.len() >= 2
        && tokens[1..].iter().any(|t| {
            let t = t.trim_matches(|c: char| matches!(c, ',' | '(' | ')'));
            suffixes.contains(t.trim_end_matches('.'))
        })
}

fn is_full_name(v: &str, lex: &Lexicons) -> bool {
    let tokens: Vec<&str> = v.split_whitespace().collect();
    if !(2..=4).contains(&tokens.len()) {
        return false;
    }
    let (first, rest) = tokens.split_first().unwrap();
    let (last, middle) = rest.split_last().unwrap();
    NAME_TOKEN.is_match(first)
        && NAME_TOKEN.is_match(last)
        && lex.given_names.contains(first)
        && lex.surnames.contains(last)
        && middle.iter().all(|m| {
            (NAME_TOKEN.is_match(m) && lex.given_names.contains(m))
                || (INITIAL.is_match(m) && m.starts_with(|c: char| c.is_uppercase()))
        })
}

fn single_token(v: &str) -> Option<&str> {
    let mut it = v.split_whitespace();
    let t = it.next()?;
    (it.next().is_none() && t.chars().all(|c| c.is_alphabetic() || c == '\'' || c == '-')).then_some(t)
}
