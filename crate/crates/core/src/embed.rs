//! Embedding tables, bags of n-grams and the four feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Example, Label, Message};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::vocab::{bigram_key, Dictionary};

/// Row-major `rows x dim` matrix of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// Entries i.i.d. uniform in `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn uniform(rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        EmbeddingTable {
            dim,
            data: (0..rows * dim).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: u32) -> &[f64] {
        let start = i as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn row_mut(&mut self, i: u32) -> &mut [f64] {
        let start = i as usize * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Read access to embedding rows. Implemented by plain tables and by the
/// shared tables used in asynchronous training.
pub trait RowSource {
    fn dim(&self) -> usize;
    fn rows(&self) -> usize;
    /// `out += row(i)`.
    fn add_row(&self, i: u32, out: &mut [f64]);
}

impl RowSource for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rows(&self) -> usize {
        EmbeddingTable::rows(self)
    }

    fn add_row(&self, i: u32, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.row(i)) {
            *o += v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub ngram: EmbeddingTable,
    pub user: EmbeddingTable,
}

pub fn init_tables(
    ngram_rows: usize,
    user_rows: usize,
    ngram_dim: usize,
    user_dim: usize,
    seed: u64,
) -> Result<Tables> {
    if ngram_dim == 0 || user_dim == 0 {
        return Err(Error::config("embedding dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"ngram-table"]));
    let ngram = EmbeddingTable::uniform(ngram_rows, ngram_dim, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"user-table"]));
    let user = EmbeddingTable::uniform(user_rows, user_dim, &mut rng);
    Ok(Tables { ngram, user })
}

/// In-vocabulary n-gram occurrences of a message group. Order is message
/// by message, each message contributing its unigrams and then its bigrams
/// in position order. Out-of-vocabulary n-grams are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bag {
    rows: Vec<u32>,
}

impl Bag {
    pub fn from_messages<'a>(messages: impl IntoIterator<Item = &'a Message>, dict: &Dictionary) -> Self {
        let mut rows = Vec::new();
        for m in messages {
            rows.extend(m.iter().filter_map(|t| dict.get(t)));
            rows.extend(m.windows(2).filter_map(|w| dict.get(&bigram_key(&w[0], &w[1]))));
        }
        Bag { rows }
    }

    pub fn from_rows(rows: Vec<u32>) -> Self {
        Bag { rows }
    }

    /// Total occurrence count L.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Mean of the occurrence embeddings; the zero vector when empty.
    pub fn embed<S: RowSource + ?Sized>(&self, table: &S) -> Vec<f64> {
        let mut out = vec![0.0; table.dim()];
        if self.rows.is_empty() {
            return out;
        }
        for &r in &self.rows {
            table.add_row(r, &mut out);
        }
        let l = self.rows.len() as f64;
        out.iter_mut().for_each(|v| *v /= l);
        out
    }
}

/// Average embedding over every in-vocabulary n-gram occurrence of all
/// `messages` (one global average).
pub fn bag_embed(messages: &[Message], table: &EmbeddingTable, vocab: &Dictionary) -> Result<Vec<f64>> {
    if table.rows() != vocab.len() {
        return Err(Error::Dimension {
            what: "ngram table rows",
            expected: vocab.len(),
            actual: table.rows(),
        });
    }
    Ok(Bag::from_messages(messages, vocab).embed(table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Input,
    Context,
    Author,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Input, Feature::Context, Feature::Author];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Input => "message",
            Feature::Context => "context",
            Feature::Author => "author",
        }
    }
}

/// Response (R), input (I), context (C) and author (A) vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVectors {
    pub input: Vec<f64>,
    pub context: Vec<f64>,
    pub author: Vec<f64>,
    pub response: Vec<f64>,
}

impl FeatureVectors {
    pub fn get(&self, f: Feature) -> &[f64] {
        match f {
            Feature::Input => &self.input,
            Feature::Context => &self.context,
            Feature::Author => &self.author,
        }
    }

    pub fn get_mut(&mut self, f: Feature) -> &mut Vec<f64> {
        match f {
            Feature::Input => &mut self.input,
            Feature::Context => &mut self.context,
            Feature::Author => &mut self.author,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.input, &self.context, &self.author, &self.response]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Example with its messages resolved to n-gram rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub input: Bag,
    pub context: Bag,
    pub response: Bag,
    pub author: u32,
    pub label: Label,
}

impl EncodedExample {
    pub fn new(example: &Example, ngrams: &Dictionary) -> Self {
        EncodedExample {
            input: Bag::from_messages([&example.input], ngrams),
            context: Bag::from_messages(&example.context, ngrams),
            response: Bag::from_messages([&example.response], ngrams),
            author: example.author,
            label: example.label,
        }
    }
}

pub fn encode_all(examples: &[Example], ngrams: &Dictionary) -> Vec<EncodedExample> {
    use rayon::prelude::*;
    examples.par_iter().map(|e| EncodedExample::new(e, ngrams)).collect()
}

pub fn featurize<N, U>(example: &EncodedExample, ngram: &N, user: &U) -> Result<FeatureVectors>
where
    N: RowSource + ?Sized,
    U: RowSource + ?Sized,
{
    if example.author as usize >= user.rows() {
        return Err(Error::Dimension {
            what: "author index",
            expected: user.rows(),
            actual: example.author as usize,
        });
    }
    let mut author = vec![0.0; user.dim()];
    user.add_row(example.author, &mut author);
    Ok(FeatureVectors {
        input: example.input.embed(ngram),
        context: example.context.embed(ngram),
        author,
        response: example.response.embed(ngram),
    })
}
