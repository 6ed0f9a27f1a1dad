use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dump::DELETED;
use super::tree::PostTree;
use crate::error::{Error, Result};
use crate::format::{BinReader, BinWriter, FileKind};
use crate::hash::{derive_seed, splitmix64, stable_hash};
use crate::vocab::{normalize, Dictionary};

pub type Message = Vec<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Classification target: 1 for positives, 0 for negatives.
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

/// One (context, input, author, response) record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub post_id: String,
    /// Id of the comment whose slot this example fills; shared by a
    /// positive and its negatives.
    pub source_id: String,
    /// Ancestors of the input message, root-ward first.
    pub context: Vec<Message>,
    pub input: Message,
    /// Index into the user population.
    pub author: u32,
    pub response: Message,
    pub label: Label,
}

impl Example {
    /// Keeps only the `m` messages nearest to the input.
    pub fn truncate_context(&mut self, m: usize) {
        if self.context.len() > m {
            self.context.drain(..self.context.len() - m);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Maximum number of context messages (m).
    pub max_context: usize,
    /// Posts with more comments than this are rejected whole.
    pub max_post_size: usize,
    pub neg_per_pos: usize,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            max_context: 25,
            max_post_size: 1000,
            neg_per_pos: 1,
            seed: 0,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_post_size == 0 {
            return Err(Error::config("max_post_size must be at least 1"));
        }
        if self.neg_per_pos == 0 {
            return Err(Error::config("neg_per_pos must be at least 1"));
        }
        Ok(())
    }
}

/// Tokenized title plus tokenized comment bodies; deleted or removed bodies
/// become empty messages.
pub fn tree_messages(tree: &PostTree) -> (Message, Vec<Message>) {
    let title = normalize(&tree.title);
    let bodies = tree
        .comments()
        .iter()
        .map(|c| {
            if c.has_missing_body() {
                Vec::new()
            } else {
                normalize(&c.body)
            }
        })
        .collect();
    (title, bodies)
}

/// Positive examples of one post: one per comment whose input message is
/// non-empty and whose author belongs to the population.
pub fn extract_examples(tree: &PostTree, config: &ExtractConfig, population: &Dictionary) -> Result<Vec<Example>> {
    config.validate()?;
    if tree.len() > config.max_post_size {
        return Err(Error::MegaThread {
            post_id: tree.post_id.clone(),
            size: tree.len(),
            limit: config.max_post_size,
        });
    }
    let (title, bodies) = tree_messages(tree);
    let mut out = Vec::new();
    for (i, comment) in tree.comments().iter().enumerate() {
        if comment.author == DELETED {
            continue;
        }
        let Some(author) = population.get(&comment.author) else {
            continue;
        };
        let parent = tree.parent(i);
        let input = parent.map_or(&title, |p| &bodies[p]);
        if input.is_empty() {
            continue;
        }
        let mut context = Vec::new();
        if let Some(p) = parent {
            let mut cursor = tree.parent(p);
            while context.len() < config.max_context {
                match cursor {
                    Some(a) => {
                        context.push(bodies[a].clone());
                        cursor = tree.parent(a);
                    }
                    None => {
                        context.push(title.clone());
                        break;
                    }
                }
            }
            context.reverse();
        }
        out.push(Example {
            post_id: tree.post_id.clone(),
            source_id: comment.id.clone(),
            context,
            input: input.clone(),
            author,
            response: bodies[i].clone(),
            label: Label::Positive,
        });
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Extraction {
    pub positives: Vec<Example>,
    /// Posts rejected for exceeding `max_post_size`.
    pub mega_threads: Vec<String>,
}

/// Runs [`extract_examples`] over every tree in parallel; output order
/// follows tree order.
pub fn extract_corpus(trees: &[PostTree], config: &ExtractConfig, population: &Dictionary) -> Result<Extraction> {
    config.validate()?;
    let per_tree: Vec<Result<Vec<Example>>> = trees
        .par_iter()
        .map(|t| extract_examples(t, config, population))
        .collect();
    let mut out = Extraction::default();
    for r in per_tree {
        match r {
            Ok(examples) => out.positives.extend(examples),
            Err(Error::MegaThread { post_id, .. }) => out.mega_threads.push(post_id),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn distinct_up_to_two(pool: &[Message]) -> Vec<&Message> {
    let mut seen: Vec<&Message> = Vec::with_capacity(2);
    for r in pool {
        if !seen.contains(&r) {
            seen.push(r);
            if seen.len() == 2 {
                break;
            }
        }
    }
    seen
}

/// For each positive, `neg_per_pos` copies whose response is replaced by a
/// uniform draw from `pool`, redrawn while it equals the true response.
/// Each positive gets its own generator seeded from `(seed, post, source)`
/// so the result does not depend on scheduling.
pub fn sample_negatives(
    positives: &[Example],
    pool: &[Message],
    neg_per_pos: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    if neg_per_pos == 0 {
        return Err(Error::config("neg_per_pos must be at least 1"));
    }
    let distinct = distinct_up_to_two(pool);
    let per_positive: Vec<Result<Vec<Example>>> = positives
        .par_iter()
        .map(|pos| {
            if distinct.len() < 2 && distinct.first().is_none_or(|only| **only == pos.response) {
                return Err(Error::Sampling(format!(
                    "response pool has no alternative to the true response of `{}`",
                    pos.source_id
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &[b"negative", pos.post_id.as_bytes(), pos.source_id.as_bytes()],
            ));
            Ok((0..neg_per_pos)
                .map(|_| {
                    let response = loop {
                        let candidate = &pool[rng.gen_range(0..pool.len())];
                        if *candidate != pos.response {
                            break candidate.clone();
                        }
                    };
                    Example {
                        response,
                        label: Label::Negative,
                        ..pos.clone()
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(positives.len() * neg_per_pos);
    for r in per_positive {
        out.extend(r?);
    }
    Ok(out)
}

/// Positives interleaved with their negatives, drawn from the pool of all
/// positive responses.
pub fn with_negatives(positives: Vec<Example>, neg_per_pos: usize, seed: u64) -> Result<Vec<Example>> {
    let pool: Vec<Message> = positives.iter().map(|e| e.response.clone()).collect();
    let negatives = sample_negatives(&positives, &pool, neg_per_pos, seed)?;
    let mut out = Vec::with_capacity(positives.len() * (neg_per_pos + 1));
    let mut negs = negatives.into_iter();
    for p in positives {
        out.push(p);
        out.extend(negs.by_ref().take(neg_per_pos));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.90,
            dev: 0.05,
            test: 0.05,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("split ratios must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Dev,
    Test,
}

/// Partition of a post, from a stable hash of its id mapped into [0, 1).
pub fn partition_of(post_id: &str, ratios: &SplitRatios) -> Partition {
    let u = (splitmix64(stable_hash(post_id.as_bytes())) >> 11) as f64 / (1u64 << 53) as f64;
    if u < ratios.train {
        Partition::Train
    } else if u < ratios.train + ratios.dev {
        Partition::Dev
    } else {
        Partition::Test
    }
}

#[derive(Debug, Default, Clone)]
pub struct Split {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

/// Splits by post so that all examples of a post, including negatives,
/// share a partition.
pub fn split_examples(examples: Vec<Example>, ratios: &SplitRatios) -> Result<Split> {
    ratios.validate()?;
    let mut split = Split::default();
    for e in examples {
        match partition_of(&e.post_id, ratios) {
            Partition::Train => split.train.push(e),
            Partition::Dev => split.dev.push(e),
            Partition::Test => split.test.push(e),
        }
    }
    Ok(split)
}

pub fn save_examples<W: Write>(w: W, examples: &[Example]) -> Result<()> {
    let mut w = BinWriter::new(w, FileKind::Examples)?;
    w.usize(examples.len())?;
    for e in examples {
        w.str(&e.post_id)?;
        w.str(&e.source_id)?;
        w.u8(match e.label {
            Label::Positive => 1,
            Label::Negative => 0,
        })?;
        w.u32(e.author)?;
        w.u32(e.context.len() as u32)?;
        for m in &e.context {
            w.tokens(m)?;
        }
        w.tokens(&e.input)?;
        w.tokens(&e.response)?;
    }
    w.finish()?;
    Ok(())
}

pub fn load_examples<R: Read>(r: R) -> Result<Vec<Example>> {
    let mut r = BinReader::new(r, FileKind::Examples)?;
    let n = r.usize()?;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let post_id = r.str()?;
        let source_id = r.str()?;
        let label = match r.u8()? {
            1 => Label::Positive,
            0 => Label::Negative,
            other => return Err(Error::format(format!("bad label tag {other}"))),
        };
        let author = r.u32()?;
        let nctx = r.u32()? as usize;
        let context = (0..nctx).map(|_| r.tokens()).collect::<Result<Vec<_>>>()?;
        let input = r.tokens()?;
        let response = r.tokens()?;
        out.push(Example {
            post_id,
            source_id,
            context,
            input,
            author,
            response,
            label,
        });
    }
    r.expect_end()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dump::{Comment, Post};
    use crate::corpus::tree::build_trees;

    fn toks(s: &str) -> Message {
        s.split(' ').map(String::from).collect()
    }

    fn chain(depth: usize) -> PostTree {
        let mut cs = Vec::new();
        for d in 1..=depth {
            cs.push(Comment {
                id: format!("c{d}"),
                parent_id: (d > 1).then(|| format!("c{}", d - 1)),
                post_id: "p".into(),
                author: "alice".into(),
                body: format!("m{d}"),
                created_utc: d as i64,
                score: 0,
            });
        }
        let post = Post {
            id: "p".into(),
            title: "root".into(),
            created_utc: 0,
        };
        build_trees(cs, &[post]).unwrap().trees.remove(0)
    }

    fn population(names: &[&str]) -> Dictionary {
        Dictionary::from_ranked(names.iter().map(|n| (n.to_string(), 1)).collect()).unwrap()
    }

    #[test]
    fn depth_two_uses_title_as_context() {
        let tree = chain(2);
        let cfg = ExtractConfig::default();
        let ex = extract_examples(&tree, &cfg, &population(&["alice"])).unwrap();
        // c1 replies to the title (no context), c2 replies to c1.
        assert_eq!(ex.len(), 2);
        assert!(ex[0].context.is_empty());
        assert_eq!(ex[0].input, toks("root"));
        assert_eq!(ex[1].context, vec![toks("root")]);
        assert_eq!(ex[1].input, toks("m1"));
        assert_eq!(ex[1].response, toks("m2"));
    }

    #[test]
    fn unknown_author_emits_nothing() {
        let tree = chain(3);
        let ex = extract_examples(&tree, &ExtractConfig::default(), &population(&["bob"])).unwrap();
        assert!(ex.is_empty());
    }

    #[test]
    fn context_truncated_to_nearest_ancestors() {
        let tree = chain(7);
        let cfg = ExtractConfig {
            max_context: 5,
            ..Default::default()
        };
        let ex = extract_examples(&tree, &cfg, &population(&["alice"])).unwrap();
        let last = ex.iter().find(|e| e.source_id == "c7").unwrap();
        assert_eq!(last.input, toks("m6"));
        let expected: Vec<Message> = (1..=5).map(|d| toks(&format!("m{d}"))).collect();
        assert_eq!(last.context, expected);
    }

    #[test]
    fn zero_context_length() {
        let tree = chain(4);
        let cfg = ExtractConfig {
            max_context: 0,
            ..Default::default()
        };
        let ex = extract_examples(&tree, &cfg, &population(&["alice"])).unwrap();
        assert!(ex.iter().all(|e| e.context.is_empty()));
        assert_eq!(ex.len(), 4);
    }

    #[test]
    fn mega_thread_rejected() {
        let tree = chain(5);
        let cfg = ExtractConfig {
            max_post_size: 4,
            ..Default::default()
        };
        assert!(matches!(
            extract_examples(&tree, &cfg, &population(&["alice"])),
            Err(Error::MegaThread { size: 5, .. })
        ));
        let ex = extract_corpus(&[tree], &cfg, &population(&["alice"])).unwrap();
        assert_eq!(ex.mega_threads, ["p"]);
        assert!(ex.positives.is_empty());
    }

    #[test]
    fn deleted_parent_body_blocks_example_but_stays_in_context() {
        let mut cs = vec![
            Comment {
                id: "a".into(),
                parent_id: None,
                post_id: "p".into(),
                author: "[deleted]".into(),
                body: "[deleted]".into(),
                created_utc: 1,
                score: 0,
            },
            Comment {
                id: "b".into(),
                parent_id: Some("a".into()),
                post_id: "p".into(),
                author: "alice".into(),
                body: "hello".into(),
                created_utc: 2,
                score: 0,
            },
        ];
        cs.push(Comment {
            id: "c".into(),
            parent_id: Some("b".into()),
            body: "reply".into(),
            created_utc: 3,
            ..cs[1].clone()
        });
        let post = Post {
            id: "p".into(),
            title: "t".into(),
            created_utc: 0,
        };
        let tree = build_trees(cs, &[post]).unwrap().trees.remove(0);
        let ex = extract_examples(&tree, &ExtractConfig::default(), &population(&["alice"])).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].source_id, "c");
        assert_eq!(ex[0].context, vec![toks("t"), vec![]]);
    }

    fn positive(id: &str, response: &str) -> Example {
        Example {
            post_id: format!("post-{id}"),
            source_id: id.into(),
            context: vec![toks("ctx")],
            input: toks("in"),
            author: 0,
            response: toks(response),
            label: Label::Positive,
        }
    }

    #[test]
    fn negative_takes_only_alternative() {
        let pos = positive("a", "true");
        let pool = vec![toks("true"), toks("other")];
        let negs = sample_negatives(std::slice::from_ref(&pos), &pool, 1, 3).unwrap();
        assert_eq!(negs.len(), 1);
        assert_eq!(negs[0].response, toks("other"));
        assert_eq!(negs[0].label, Label::Negative);
        assert_eq!(
            Example {
                response: pos.response.clone(),
                label: Label::Positive,
                ..negs[0].clone()
            },
            pos
        );
    }

    #[test]
    fn one_negative_per_positive_and_deterministic() {
        let positives: Vec<Example> = (0..50).map(|i| positive(&i.to_string(), &format!("r{i}"))).collect();
        let pool: Vec<Message> = positives.iter().map(|e| e.response.clone()).collect();
        let a = sample_negatives(&positives, &pool, 1, 9).unwrap();
        let b = sample_negatives(&positives, &pool, 1, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert!(a.iter().zip(&positives).all(|(n, p)| n.response != p.response));
        let three = sample_negatives(&positives, &pool, 3, 9).unwrap();
        assert_eq!(three.len(), 150);
    }

    #[test]
    fn degenerate_pool_is_an_error() {
        let pos = positive("a", "same");
        assert!(matches!(
            sample_negatives(std::slice::from_ref(&pos), &[toks("same")], 1, 0),
            Err(Error::Sampling(_))
        ));
        assert!(matches!(
            sample_negatives(std::slice::from_ref(&pos), &[toks("same"), toks("same")], 1, 0),
            Err(Error::Sampling(_))
        ));
        assert!(matches!(sample_negatives(&[pos], &[], 1, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn split_keeps_posts_together() {
        let mut examples = Vec::new();
        for i in 0..20 {
            let mut e = positive(&i.to_string(), "r");
            e.post_id = "same-post".into();
            examples.push(e);
        }
        let s = split_examples(examples, &SplitRatios::default()).unwrap();
        let sizes = [s.train.len(), s.dev.len(), s.test.len()];
        assert!(sizes.contains(&20));
        assert_eq!(sizes.iter().sum::<usize>(), 20);
    }

    #[test]
    fn split_ratios_validated() {
        let bad = SplitRatios {
            train: 0.9,
            dev: 0.1,
            test: 0.1,
        };
        assert!(matches!(split_examples(vec![], &bad), Err(Error::Config(_))));
        let all_train = SplitRatios {
            train: 1.0,
            dev: 0.0,
            test: 0.0,
        };
        let examples: Vec<Example> = (0..100).map(|i| positive(&i.to_string(), "r")).collect();
        let s = split_examples(examples, &all_train).unwrap();
        assert_eq!(s.train.len(), 100);
    }

    #[test]
    fn split_fraction_concentrates() {
        let ratios = SplitRatios::default();
        let train = (0..10_000)
            .filter(|i| partition_of(&format!("post{i}"), &ratios) == Partition::Train)
            .count();
        let frac = train as f64 / 10_000.0;
        assert!((frac - 0.90).abs() <= 0.02, "train fraction {frac}");
    }

    #[test]
    fn example_file_round_trip() {
        let mut e = positive("x", "hello world");
        e.context.push(vec![]);
        let examples = vec![
            e.clone(),
            Example {
                label: Label::Negative,
                ..e
            },
        ];
        let mut buf = Vec::new();
        save_examples(&mut buf, &examples).unwrap();
        assert_eq!(&buf[..4], b"CVRK");
        assert_eq!(load_examples(&buf[..]).unwrap(), examples);
        buf.push(0);
        assert!(load_examples(&buf[..]).is_err());
    }
}
