//! Tokenization and stemming.

use rust_stemmers::Algorithm;
use serde::{Deserialize, Serialize};

/// Stemmed, lowercased tokens of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    tokens: Vec<String>,
}

impl TokenizedText {
    /// Drops empty tokens so the non-empty invariant holds.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenizedText {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct tokens in order of first occurrence.
    pub fn distinct(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.tokens
            .iter()
            .map(String::as_str)
            .filter(|t| seen.insert(*t))
            .collect()
    }

    pub fn count(&self, term: &str) -> usize {
        self.tokens.iter().filter(|t| *t == term).count()
    }
}

pub trait Stemmer: Send + Sync {
    fn stem(&self, word: &str) -> String;
}

/// Snowball English (the revised Porter algorithm).
pub struct PorterStemmer(rust_stemmers::Stemmer);

impl Default for PorterStemmer {
    fn default() -> Self {
        PorterStemmer(rust_stemmers::Stemmer::create(Algorithm::English))
    }
}

impl Stemmer for PorterStemmer {
    fn stem(&self, word: &str) -> String {
        self.0.stem(word).into_owned()
    }
}

/// Leaves words unchanged.
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn stem(&self, word: &str) -> String {
        word.to_string()
    }
}

/// Splits on maximal runs of Unicode letters/digits, lowercases, then stems.
pub struct Tokenizer<S = PorterStemmer> {
    stemmer: S,
}

impl Default for Tokenizer<PorterStemmer> {
    fn default() -> Self {
        Tokenizer {
            stemmer: PorterStemmer::default(),
        }
    }
}

impl<S: Stemmer> Tokenizer<S> {
    pub fn with_stemmer(stemmer: S) -> Self {
        Tokenizer { stemmer }
    }

    pub fn tokenize(&self, text: &str) -> TokenizedText {
        let lower = text.to_lowercase();
        TokenizedText::from_tokens(
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(|w| self.stemmer.stem(w)),
        )
    }
}

/// Tokenizes with the default stemmer.
pub fn tokenize(text: &str) -> TokenizedText {
    thread_local! {
        static TOKENIZER: Tokenizer = Tokenizer::default();
    }
    TOKENIZER.with(|t| t.tokenize(text))
}

/// Joins the two answers with one space; an empty side adds no separator.
pub fn concat_answers(a1: &str, a2: &str) -> String {
    match (a1.is_empty(), a2.is_empty()) {
        (true, _) => a2.to_string(),
        (_, true) => a1.to_string(),
        _ => format!("{a1} {a2}"),
    }
}
