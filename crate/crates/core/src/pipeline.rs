//! Stage compositions shared by the command-line tool and the tests:
//! dump to trees, trees to vocabulary, trees to split example sets.

use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_trees, extract_corpus, parse_dump, split_examples, tree_messages, with_negatives, ExtractConfig, Forest,
    PostTree, Split, SplitRatios,
};
use crate::error::Result;
use crate::vocab::{build_ngram_vocab, build_user_population, count_authors, NgramCounts, NgramReport, Vocabulary};

/// Parses a dump and links it into trees.
pub fn ingest<R: BufRead>(reader: R, strict: bool) -> Result<(Forest, usize)> {
    let dump = parse_dump(reader, strict)?;
    let skipped = dump.skipped;
    Ok((build_trees(dump.comments, &dump.posts)?, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub unigrams: usize,
    pub bigrams: usize,
    pub users: usize,
}

impl Default for VocabConfig {
    /// Desk scale: 5k unigrams, 5k bigrams, 1k users.
    fn default() -> Self {
        VocabConfig {
            unigrams: 5000,
            bigrams: 5000,
            users: 1000,
        }
    }
}

/// Counts n-grams over every title and body, and authors over every
/// comment, of the trees within the size limit.
pub fn build_vocabulary(
    trees: &[PostTree],
    cfg: &VocabConfig,
    max_post_size: usize,
) -> Result<(Vocabulary, NgramReport)> {
    let kept: Vec<&PostTree> = trees.iter().filter(|t| t.len() <= max_post_size).collect();
    let counts = kept
        .par_iter()
        .map(|t| {
            let (title, bodies) = tree_messages(t);
            let mut c = NgramCounts::default();
            c.add_message(&title);
            for b in &bodies {
                c.add_message(b);
            }
            c
        })
        .reduce(NgramCounts::default, NgramCounts::merge);
    let (ngrams, report) = build_ngram_vocab(&counts, cfg.unigrams, cfg.bigrams)?;
    let authors = count_authors(kept.iter().flat_map(|t| t.comments().iter().map(|c| c.author.as_str())));
    let users = build_user_population(&authors, cfg.users)?;
    Ok((Vocabulary::new(ngrams, users), report))
}

#[derive(Debug, Default)]
pub struct Dataset {
    pub split: Split,
    pub positives: usize,
    pub mega_threads: Vec<String>,
}

/// Positives from every tree, negatives sampled from all positive
/// responses, then a split by post.
pub fn build_examples(
    trees: &[PostTree],
    vocab: &Vocabulary,
    cfg: &ExtractConfig,
    ratios: &SplitRatios,
) -> Result<Dataset> {
    let extraction = extract_corpus(trees, cfg, &vocab.users)?;
    let positives = extraction.positives.len();
    let examples = with_negatives(extraction.positives, cfg.neg_per_pos, cfg.seed)?;
    Ok(Dataset {
        split: split_examples(examples, ratios)?,
        positives,
        mega_threads: extraction.mega_threads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn synthetic_corpus_end_to_end() {
        let corpus = generate(&SynthConfig {
            posts: 60,
            mean_comments: 6,
            users: 15,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf, 0).unwrap();
        let (forest, skipped) = ingest(buf.as_slice(), true).unwrap();
        assert_eq!(skipped, 0);
        let (vocab, _) = build_vocabulary(&forest.trees, &VocabConfig::default(), 1000).unwrap();
        assert_eq!(vocab.users.len(), 15);
        let data = build_examples(
            &forest.trees,
            &vocab,
            &ExtractConfig::default(),
            &SplitRatios::default(),
        )
        .unwrap();
        let total = data.split.train.len() + data.split.dev.len() + data.split.test.len();
        assert_eq!(total, 2 * data.positives);
        assert_eq!(data.positives, corpus.comments.len());
    }
}
