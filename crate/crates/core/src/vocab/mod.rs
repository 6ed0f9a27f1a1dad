//! Text normalization and the n-gram / user dictionaries.

mod dictionary;
mod markdown;
mod ngram;
mod tokenize;

pub use dictionary::{
    build_ngram_vocab, build_user_population, count_authors, top_k, Dictionary, NgramCounts, NgramReport, Vocabulary,
};
pub use markdown::strip_markdown;
pub use ngram::{bigram_key, extract_ngrams, is_bigram};
pub use tokenize::{tokenize, URL_TOKEN};

/// Markdown removal followed by tokenization.
pub fn normalize(body: &str) -> Vec<String> {
    tokenize(&strip_markdown(body))
}
