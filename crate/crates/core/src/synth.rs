//! Synthetic comment dumps with planted signal.
//!
//! Every message carries four kinds of tokens besides filler words:
//!
//! * a keyword `kwJ` equal to the keyword of its grandparent (random when it
//!   has none), so the correct response echoes a token from two messages
//!   back and only a model that sees the context can exploit it;
//! * a question `qK`, and the answer `ansK` to its parent's question, which
//!   ties a response to its input message;
//! * with probability `signature_prob`, its author's signature `sigS`.
//!
//! Knobs plant orphans, oversized posts, deleted authors, removed bodies and
//! one-off authors so the extraction filters have something to remove. The
//! generator records which comments are unreachable and which posts are
//! oversized.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Comment, Post, DELETED, REMOVED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub posts: usize,
    /// Comments per ordinary post are uniform in `1..=2 * mean - 1`.
    pub mean_comments: usize,
    pub users: usize,
    pub keywords: usize,
    pub questions: usize,
    pub signatures: usize,
    pub signature_prob: f64,
    pub filler_words: usize,
    pub max_filler: usize,
    /// Shuffle each message's tokens; otherwise the planted tokens come
    /// first in a fixed order, followed by the filler.
    pub shuffle_tokens: bool,
    pub orphan_rate: f64,
    pub mega_threads: usize,
    pub mega_size: usize,
    pub deleted_author_rate: f64,
    pub removed_body_rate: f64,
    /// Probability that a comment is written by an author who never posts
    /// again.
    pub drifter_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            posts: 1500,
            mean_comments: 20,
            users: 300,
            keywords: 10,
            questions: 10,
            signatures: 10,
            signature_prob: 0.9,
            filler_words: 300,
            max_filler: 3,
            shuffle_tokens: true,
            orphan_rate: 0.0,
            mega_threads: 0,
            mega_size: 1100,
            deleted_author_rate: 0.0,
            removed_body_rate: 0.0,
            drifter_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("posts", self.posts),
            ("mean_comments", self.mean_comments),
            ("users", self.users),
            ("keywords", self.keywords),
            ("questions", self.questions),
            ("signatures", self.signatures),
            ("filler_words", self.filler_words),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("synth {name} must be at least 1")));
        }
        let rates = [
            self.signature_prob,
            self.orphan_rate,
            self.deleted_author_rate,
            self.removed_body_rate,
            self.drifter_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("synth rates must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Facts about the generated corpus that the pipeline must rediscover.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthTruth {
    /// Every comment that cannot reach its post: planted orphans and all
    /// their descendants.
    pub unreachable: BTreeSet<String>,
    pub mega_threads: BTreeSet<String>,
    /// Signature index of every regular user.
    pub signatures: HashMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub truth: SynthTruth,
}

pub fn keyword(j: usize) -> String {
    format!("kw{j}")
}

pub fn question(k: usize) -> String {
    format!("q{k}")
}

pub fn answer(k: usize) -> String {
    format!("ans{k}")
}

pub fn signature(s: usize) -> String {
    format!("sig{s}")
}

pub fn user_name(u: usize) -> String {
    format!("user{u}")
}

/// Hidden state of one message.
#[derive(Clone, Copy)]
struct Node {
    keyword: usize,
    question: usize,
    parent: Option<usize>,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    drifters: usize,
}

impl Generator<'_> {
    fn fillers(&mut self, out: &mut Vec<String>) {
        let n = self.rng.gen_range(0..=self.cfg.max_filler);
        for _ in 0..n {
            out.push(format!("w{}", self.rng.gen_range(0..self.cfg.filler_words)));
        }
    }

    fn author(&mut self) -> String {
        let r: f64 = self.rng.gen();
        if r < self.cfg.deleted_author_rate {
            return DELETED.to_string();
        }
        if r < self.cfg.deleted_author_rate + self.cfg.drifter_rate {
            self.drifters += 1;
            return format!("drifter{}", self.drifters);
        }
        // Skewed toward low indices so user frequencies vary.
        let u: f64 = self.rng.gen();
        user_name(((u * u) * self.cfg.users as f64) as usize % self.cfg.users)
    }

    fn post(&mut self, p: usize, size: usize, plant_orphans: bool, out: &mut SynthCorpus) {
        let cfg = self.cfg;
        let post_id = format!("p{p}");
        let created = 1_000_000 + 10_000 * p as i64;
        // Node 0 is the title.
        let mut nodes = vec![Node {
            keyword: self.rng.gen_range(0..cfg.keywords),
            question: self.rng.gen_range(0..cfg.questions),
            parent: None,
        }];
        let mut title = vec![keyword(nodes[0].keyword), question(nodes[0].question)];
        self.fillers(&mut title);
        if cfg.shuffle_tokens {
            title.shuffle(&mut self.rng);
        }
        out.posts.push(Post {
            id: post_id.clone(),
            title: title.join(" "),
            created_utc: created,
        });

        let mut ids: Vec<String> = vec![post_id.clone()];
        let mut orphaned = vec![false];
        for i in 1..=size {
            let r: f64 = self.rng.gen();
            let parent = if i == 1 || r < 0.15 {
                0
            } else if r < 0.6 {
                i - 1
            } else {
                self.rng.gen_range(1..i)
            };
            let grandparent = nodes[parent].parent;
            let node = Node {
                keyword: grandparent.map_or_else(|| self.rng.gen_range(0..cfg.keywords), |g| nodes[g].keyword),
                question: self.rng.gen_range(0..cfg.questions),
                parent: Some(parent),
            };
            nodes.push(node);
            let author = self.author();
            let mut tokens = vec![
                keyword(node.keyword),
                question(node.question),
                answer(nodes[parent].question),
            ];
            if let Some(&s) = out.truth.signatures.get(&author) {
                if self.rng.gen_bool(cfg.signature_prob) {
                    tokens.push(signature(s));
                }
            }
            self.fillers(&mut tokens);
            if cfg.shuffle_tokens {
                tokens.shuffle(&mut self.rng);
            }
            let body = if self.rng.gen_bool(cfg.removed_body_rate) {
                if self.rng.gen_bool(0.5) { DELETED } else { REMOVED }.to_string()
            } else {
                tokens.join(" ")
            };
            let id = format!("{post_id}c{i}");
            let planted = plant_orphans && self.rng.gen_bool(cfg.orphan_rate);
            let parent_id = if planted {
                Some(format!("ghost{id}"))
            } else if parent == 0 {
                None
            } else {
                Some(ids[parent].clone())
            };
            let unreachable = planted || orphaned[parent];
            if unreachable {
                out.truth.unreachable.insert(id.clone());
            }
            orphaned.push(unreachable);
            out.comments.push(Comment {
                id: id.clone(),
                parent_id,
                post_id: post_id.clone(),
                author,
                body,
                created_utc: created + i as i64,
                score: self.rng.gen_range(-5..50),
            });
            ids.push(id);
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut gen = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        drifters: 0,
    };
    let mut out = SynthCorpus::default();
    for u in 0..cfg.users {
        let s = gen.rng.gen_range(0..cfg.signatures);
        out.truth.signatures.insert(user_name(u), s);
    }
    let total = cfg.posts + cfg.mega_threads;
    let mut mega: Vec<usize> = (0..total).collect();
    mega.shuffle(&mut gen.rng);
    let mega: BTreeSet<usize> = mega.into_iter().take(cfg.mega_threads).collect();
    for p in 0..total {
        if mega.contains(&p) {
            out.truth.mega_threads.insert(format!("p{p}"));
            gen.post(p, cfg.mega_size, false, &mut out);
        } else {
            let size = gen.rng.gen_range(1..=2 * cfg.mean_comments - 1);
            gen.post(p, size, true, &mut out);
        }
    }
    Ok(out)
}

impl SynthCorpus {
    /// Writes posts and comments as dump records in a seeded shuffled order.
    pub fn write_jsonl<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        let mut lines: Vec<String> = Vec::with_capacity(self.posts.len() + self.comments.len());
        for p in &self.posts {
            lines.push(
                json!({"id": format!("t3_{}", p.id), "title": p.title, "created_utc": p.created_utc}).to_string(),
            );
        }
        for c in &self.comments {
            let parent = c
                .parent_id
                .as_ref()
                .map_or_else(|| format!("t3_{}", c.post_id), |p| format!("t1_{p}"));
            lines.push(
                json!({
                    "id": c.id,
                    "link_id": format!("t3_{}", c.post_id),
                    "parent_id": parent,
                    "author": c.author,
                    "body": c.body,
                    "created_utc": c.created_utc.to_string(),
                    "score": c.score,
                })
                .to_string(),
            );
        }
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for l in lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_trees, parse_dump};

    fn small() -> SynthConfig {
        SynthConfig {
            posts: 40,
            mean_comments: 8,
            users: 20,
            orphan_rate: 0.05,
            mega_threads: 1,
            mega_size: 30,
            deleted_author_rate: 0.05,
            drifter_rate: 0.05,
            removed_body_rate: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.comments, b.comments);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn keyword_echoes_grandparent() {
        let corpus = generate(&SynthConfig {
            posts: 20,
            ..Default::default()
        })
        .unwrap();
        let by_id: HashMap<&str, &Comment> = corpus.comments.iter().map(|c| (c.id.as_str(), c)).collect();
        let kw = |text: &str| text.split(' ').find(|t| t.starts_with("kw")).unwrap().to_string();
        let mut checked = 0;
        for c in &corpus.comments {
            let Some(p) = c.parent_id.as_deref() else { continue };
            let parent = by_id[p];
            let expected = match parent.parent_id.as_deref() {
                Some(g) => kw(&by_id[g].body),
                None => kw(&corpus.posts.iter().find(|x| x.id == c.post_id).unwrap().title),
            };
            assert_eq!(kw(&c.body), expected);
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn pipeline_finds_planted_orphans() {
        let corpus = generate(&small()).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf, 1).unwrap();
        let dump = parse_dump(buf.as_slice(), true).unwrap();
        assert_eq!(dump.comments.len(), corpus.comments.len());
        let forest = build_trees(dump.comments, &dump.posts).unwrap();
        let found: BTreeSet<String> = forest.orphans.iter().cloned().collect();
        assert_eq!(found, corpus.truth.unreachable);
        assert!(!found.is_empty());
    }
}
