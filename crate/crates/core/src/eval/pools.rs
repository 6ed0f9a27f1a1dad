use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Example, Message};
use crate::embed::Bag;
use crate::error::{Error, Result};
use crate::format::{BinReader, BinWriter, FileKind};
use crate::vocab::Dictionary;

/// One positive test example's features with N candidate responses, exactly
/// one of which is the true response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingPool {
    pub context: Vec<Message>,
    pub input: Message,
    pub author: u32,
    pub candidates: Vec<Message>,
    pub positive_index: usize,
}

impl RankingPool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn encode(&self, ngrams: &Dictionary) -> EncodedPool {
        EncodedPool {
            input: Bag::from_messages([&self.input], ngrams),
            context: Bag::from_messages(&self.context, ngrams),
            author: self.author,
            candidates: self
                .candidates
                .iter()
                .map(|c| Bag::from_messages([c], ngrams))
                .collect(),
            positive_index: self.positive_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPool {
    pub input: Bag,
    pub context: Bag,
    pub author: u32,
    pub candidates: Vec<Bag>,
    pub positive_index: usize,
}

pub fn encode_pools(pools: &[RankingPool], ngrams: &Dictionary) -> Vec<EncodedPool> {
    use rayon::prelude::*;
    pools.par_iter().map(|p| p.encode(ngrams)).collect()
}

/// Draws `count` positives from `test` without replacement and fills each
/// pool with `n - 1` distractors drawn uniformly from the distinct test
/// responses, never repeating a response within a pool and never equal to
/// the positive. The positive lands at a uniformly random slot.
pub fn build_pools(test: &[Example], n: usize, count: usize, seed: u64) -> Result<Vec<RankingPool>> {
    if n == 0 {
        return Err(Error::config("pool size N must be at least 1"));
    }
    if count == 0 {
        return Err(Error::config("pool count must be at least 1"));
    }
    let positives: Vec<&Example> = test.iter().filter(|e| e.label.is_positive()).collect();
    if positives.len() < count {
        return Err(Error::Sampling(format!(
            "requested {count} pools but the test set has {} positives",
            positives.len()
        )));
    }
    let mut index: HashMap<&Message, usize> = HashMap::new();
    let mut distinct: Vec<&Message> = Vec::new();
    for e in test {
        index.entry(&e.response).or_insert_with(|| {
            distinct.push(&e.response);
            distinct.len() - 1
        });
    }
    if distinct.len() < n {
        return Err(Error::Sampling(format!(
            "pools of {n} need {n} distinct responses; the test set has {}",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, positives.len(), count).into_vec();
    let mut pools = Vec::with_capacity(count);
    for i in chosen {
        let ex = positives[i];
        let own = index[&ex.response];
        let mut picked: Vec<usize> = Vec::with_capacity(n - 1);
        while picked.len() < n - 1 {
            let j = rng.gen_range(0..distinct.len());
            if j != own && !picked.contains(&j) {
                picked.push(j);
            }
        }
        let positive_index = rng.gen_range(0..n);
        let mut candidates: Vec<Message> = picked.iter().map(|&j| distinct[j].clone()).collect();
        candidates.insert(positive_index, ex.response.clone());
        pools.push(RankingPool {
            context: ex.context.clone(),
            input: ex.input.clone(),
            author: ex.author,
            candidates,
            positive_index,
        });
    }
    Ok(pools)
}

pub fn save_pools<W: Write>(w: W, pools: &[RankingPool]) -> Result<()> {
    let mut w = BinWriter::new(w, FileKind::Pools)?;
    w.usize(pools.len())?;
    for p in pools {
        w.u32(p.author)?;
        w.u32(p.context.len() as u32)?;
        for m in &p.context {
            w.tokens(m)?;
        }
        w.tokens(&p.input)?;
        w.u32(p.candidates.len() as u32)?;
        w.u32(p.positive_index as u32)?;
        for c in &p.candidates {
            w.tokens(c)?;
        }
    }
    w.finish()?;
    Ok(())
}

pub fn load_pools<R: Read>(r: R) -> Result<Vec<RankingPool>> {
    let mut r = BinReader::new(r, FileKind::Pools)?;
    let count = r.usize()?;
    let mut pools = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let author = r.u32()?;
        let nctx = r.u32()? as usize;
        let context = (0..nctx).map(|_| r.tokens()).collect::<Result<Vec<_>>>()?;
        let input = r.tokens()?;
        let n = r.u32()? as usize;
        let positive_index = r.u32()? as usize;
        if n == 0 || positive_index >= n {
            return Err(Error::format(format!(
                "pool with {n} candidates has positive at {positive_index}"
            )));
        }
        let candidates = (0..n).map(|_| r.tokens()).collect::<Result<Vec<_>>>()?;
        pools.push(RankingPool {
            context,
            input,
            author,
            candidates,
            positive_index,
        });
    }
    r.expect_end()?;
    Ok(pools)
}
