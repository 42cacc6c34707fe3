use std::collections::HashSet;
use std::io;
use std::path::Path;

/// A lowercase-normalized word list, one entry per line.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashSet<String>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(normalize)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { entries }
    }

    pub fn contains(&self, value: &str) -> bool {
        self.entries.contains(&normalize(value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    /// Entries in sorted order, for reproducible sampling.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.iter().collect();
        v.sort_unstable();
        v
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// The full set of dictionaries used by the labeler.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub given_names: Lexicon,
    pub surnames: Lexicon,
    pub cities: Lexicon,
    pub states: Lexicon,
    pub countries: Lexicon,
    pub corporate_suffixes: Lexicon,
    pub units: Lexicon,
    pub genders: Lexicon,
    pub currencies: Lexicon,
    pub brands: Lexicon,
    pub street_words: Lexicon,
}

macro_rules! builtin {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/lexicons/", $name, ".txt"))
    };
}

const FILES: [(&str, &str); 11] = [
    ("given_names", builtin!("given_names")),
    ("surnames", builtin!("surnames")),
    ("cities", builtin!("cities")),
    ("states", builtin!("states")),
    ("countries", builtin!("countries")),
    ("corporate_suffixes", builtin!("corporate_suffixes")),
    ("units", builtin!("units")),
    ("genders", builtin!("genders")),
    ("currencies", builtin!("currencies")),
    ("brands", builtin!("brands")),
    ("street_words", builtin!("street_words")),
];

impl Lexicons {
    /// Lexicons compiled into the binary from `data/lexicons`.
    pub fn builtin() -> Self {
        Self::assemble(|_, text| Ok(Lexicon::parse(text))).expect("builtin lexicons parse")
    }

    /// Loads `<name>.txt` files from `dir`; any file not present falls back
    /// to the builtin copy.
    pub fn from_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("lexicon directory {} not found", dir.display()),
            ));
        }
        Self::assemble(|name, builtin| {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                Ok(Lexicon::parse(&std::fs::read_to_string(&path)?))
            } else {
                tracing::debug!(lexicon = name, "not in lexicon dir, using builtin");
                Ok(Lexicon::parse(builtin))
            }
        })
    }

    fn assemble(mut load: impl FnMut(&str, &str) -> io::Result<Lexicon>) -> io::Result<Self> {
        let mut lex: Vec<Lexicon> = Vec::with_capacity(FILES.len());
        for (name, text) in FILES {
            lex.push(load(name, text)?);
        }
        let mut it = lex.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Self {
            given_names: next(),
            surnames: next(),
            cities: next(),
            states: next(),
            countries: next(),
            corporate_suffixes: next(),
            units: next(),
            genders: next(),
            currencies: next(),
            brands: next(),
            street_words: next(),
        })
    }
}
