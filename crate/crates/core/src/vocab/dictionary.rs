use std::collections::HashMap;
use std::hash::Hasher;
use std::io::{Read, Write};

use fnv::FnvHasher;

use super::ngram::{bigram_key, is_bigram};
use crate::corpus::DELETED;
use crate::error::{Error, Result};
use crate::format::{BinReader, BinWriter, FileKind};

/// Dense string-to-index table with per-entry frequencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dictionary {
    entries: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    /// Builds a dictionary whose indices follow the order of `items`.
    pub fn from_ranked(items: Vec<(String, u64)>) -> Result<Self> {
        let mut dict = Dictionary::default();
        for (entry, count) in items {
            let next = dict.entries.len() as u32;
            if dict.index.insert(entry.clone(), next).is_some() {
                return Err(Error::format(format!("duplicate dictionary entry `{entry}`")));
            }
            dict.entries.push(entry);
            dict.counts.push(count);
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry: &str) -> Option<u32> {
        self.index.get(entry).copied()
    }

    pub fn entry(&self, index: u32) -> &str {
        &self.entries[index as usize]
    }

    pub fn count(&self, index: u32) -> u64 {
        self.counts[index as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str, u64)> + '_ {
        self.entries
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(i, (e, &c))| (i as u32, e.as_str(), c))
    }

    /// FNV-1a over every (entry, index) pair in index order.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        for (i, entry) in self.entries.iter().enumerate() {
            h.write(&(entry.len() as u32).to_le_bytes());
            h.write(entry.as_bytes());
            h.write(&(i as u32).to_le_bytes());
        }
        h.finish()
    }

    fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.u32(self.len() as u32)?;
        for (_, entry, count) in self.iter() {
            w.str(entry)?;
            w.u64(count)?;
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        let n = r.u32()? as usize;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let entry = r.str()?;
            let count = r.u64()?;
            items.push((entry, count));
        }
        Dictionary::from_ranked(items)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "entry\tindex\tcount")?;
        for (i, entry, count) in self.iter() {
            writeln!(w, "{entry}\t{i}\t{count}")?;
        }
        Ok(())
    }
}

/// Mergeable unigram and bigram frequency tables.
#[derive(Debug, Clone, Default)]
pub struct NgramCounts {
    pub unigrams: HashMap<String, u64>,
    pub bigrams: HashMap<String, u64>,
}

impl NgramCounts {
    pub fn add_message(&mut self, tokens: &[String]) {
        for t in tokens {
            *self.unigrams.entry(t.clone()).or_default() += 1;
        }
        for w in tokens.windows(2) {
            *self.bigrams.entry(bigram_key(&w[0], &w[1])).or_default() += 1;
        }
    }

    pub fn merge(mut self, other: NgramCounts) -> NgramCounts {
        for (k, v) in other.unigrams {
            *self.unigrams.entry(k).or_default() += v;
        }
        for (k, v) in other.bigrams {
            *self.bigrams.entry(k).or_default() += v;
        }
        self
    }
}

/// Most frequent `k` keys; equal counts are ordered lexicographically.
pub fn top_k(counts: &HashMap<String, u64>, k: usize) -> Vec<(String, u64)> {
    let mut items: Vec<(&String, u64)> = counts.iter().map(|(s, &c)| (s, c)).collect();
    items.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.truncate(k);
    items.into_iter().map(|(s, c)| (s.clone(), c)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramReport {
    pub unigrams_kept: usize,
    pub bigrams_kept: usize,
    pub distinct_unigrams: usize,
    pub distinct_bigrams: usize,
    /// Count of the least frequent retained unigram.
    pub min_unigram_count: Option<u64>,
    pub min_bigram_count: Option<u64>,
}

/// Keeps the `k1` most frequent unigrams (indices first) and the `k2` most
/// frequent bigrams.
pub fn build_ngram_vocab(counts: &NgramCounts, k1: usize, k2: usize) -> Result<(Dictionary, NgramReport)> {
    if k1 == 0 || k2 == 0 {
        return Err(Error::config("ngram vocabulary sizes must be at least 1"));
    }
    if counts.unigrams.len() < k1 {
        log::warn!(
            "only {} distinct unigrams, fewer than the requested {k1}; keeping all",
            counts.unigrams.len()
        );
    }
    if counts.bigrams.len() < k2 {
        log::warn!(
            "only {} distinct bigrams, fewer than the requested {k2}; keeping all",
            counts.bigrams.len()
        );
    }
    let unigrams = top_k(&counts.unigrams, k1);
    let bigrams = top_k(&counts.bigrams, k2);
    let report = NgramReport {
        unigrams_kept: unigrams.len(),
        bigrams_kept: bigrams.len(),
        distinct_unigrams: counts.unigrams.len(),
        distinct_bigrams: counts.bigrams.len(),
        min_unigram_count: unigrams.last().map(|e| e.1),
        min_bigram_count: bigrams.last().map(|e| e.1),
    };
    let mut items = unigrams;
    items.extend(bigrams);
    Ok((Dictionary::from_ranked(items)?, report))
}

/// Counts comments per author, ignoring the deleted-account marker.
pub fn count_authors<'a>(authors: impl IntoIterator<Item = &'a str>) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for a in authors {
        if a != DELETED && !a.is_empty() {
            *counts.entry(a.to_string()).or_default() += 1;
        }
    }
    counts
}

/// Keeps the `p` most active users; one index per username.
pub fn build_user_population(counts: &HashMap<String, u64>, p: usize) -> Result<Dictionary> {
    if p == 0 {
        return Err(Error::config("user population size must be at least 1"));
    }
    let mut filtered = counts.clone();
    filtered.remove(DELETED);
    Dictionary::from_ranked(top_k(&filtered, p))
}

/// N-gram dictionary (unigrams first, then bigrams) plus the user
/// population.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    pub ngrams: Dictionary,
    pub users: Dictionary,
}

impl Vocabulary {
    pub fn new(ngrams: Dictionary, users: Dictionary) -> Self {
        Vocabulary { ngrams, users }
    }

    pub fn ngram_fingerprint(&self) -> u64 {
        self.ngrams.fingerprint()
    }

    pub fn user_fingerprint(&self) -> u64 {
        self.users.fingerprint()
    }

    pub fn unigram_count(&self) -> usize {
        self.ngrams.entries.iter().filter(|e| !is_bigram(e)).count()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BinWriter::new(w, FileKind::Vocabulary)?;
        self.ngrams.write_to(&mut w)?;
        self.users.write_to(&mut w)?;
        w.u64(self.ngram_fingerprint())?;
        w.u64(self.user_fingerprint())?;
        w.finish()?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r, FileKind::Vocabulary)?;
        let ngrams = Dictionary::read_from(&mut r)?;
        let users = Dictionary::read_from(&mut r)?;
        let vocab = Vocabulary { ngrams, users };
        let (nf, uf) = (r.u64()?, r.u64()?);
        if nf != vocab.ngram_fingerprint() {
            return Err(Error::Fingerprint {
                what: "ngram vocabulary",
                expected: nf,
                found: vocab.ngram_fingerprint(),
            });
        }
        if uf != vocab.user_fingerprint() {
            return Err(Error::Fingerprint {
                what: "user population",
                expected: uf,
                found: vocab.user_fingerprint(),
            });
        }
        r.expect_end()?;
        Ok(vocab)
    }
}
