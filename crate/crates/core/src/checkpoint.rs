//! Binary model checkpoints and learned user-vector files. All parameters
//! are stored as little-endian f32 in [`ModelParams::tensors`] order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::{BinReader, BinWriter, FileKind};
use crate::model::{Arch, FeatureSet, ModelConfig, ModelParams};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

fn arch_tag(arch: Arch) -> u8 {
    match arch {
        Arch::Single => 1,
        Arch::Multi => 2,
    }
}

pub fn save_checkpoint<W: Write>(w: W, params: &ModelParams, vocab: &Vocabulary, seed: u64) -> Result<()> {
    check_vocab(params, vocab)?;
    let cfg = &params.config;
    let mut w = BinWriter::new(w, FileKind::Checkpoint)?;
    w.u8(arch_tag(cfg.arch))?;
    w.u8(cfg.features.bits())?;
    w.u32(cfg.ngram_dim as u32)?;
    w.u32(cfg.user_dim as u32)?;
    w.u32(cfg.hidden.len() as u32)?;
    for &h in &cfg.hidden {
        w.u32(h as u32)?;
    }
    w.u64(params.tables.ngram.rows() as u64)?;
    w.u64(params.tables.user.rows() as u64)?;
    w.u64(vocab.ngram_fingerprint())?;
    w.u64(vocab.user_fingerprint())?;
    w.u64(seed)?;
    for t in params.tensors() {
        w.f32s(t)?;
    }
    w.finish()?;
    Ok(())
}

fn check_vocab(params: &ModelParams, vocab: &Vocabulary) -> Result<()> {
    if params.tables.ngram.rows() != vocab.ngrams.len() {
        return Err(Error::Dimension {
            what: "n-gram table rows",
            expected: vocab.ngrams.len(),
            actual: params.tables.ngram.rows(),
        });
    }
    if params.tables.user.rows() != vocab.users.len() {
        return Err(Error::Dimension {
            what: "user table rows",
            expected: vocab.users.len(),
            actual: params.tables.user.rows(),
        });
    }
    Ok(())
}

/// Loads a checkpoint, rejecting it unless it was saved against `vocab`.
pub fn load_checkpoint<R: Read>(r: R, vocab: &Vocabulary) -> Result<Checkpoint> {
    let mut r = BinReader::new(r, FileKind::Checkpoint)?;
    let arch = match r.u8()? {
        1 => Arch::Single,
        2 => Arch::Multi,
        other => return Err(Error::format(format!("unknown architecture tag {other}"))),
    };
    let features = FeatureSet::from_bits(r.u8()?)?;
    let ngram_dim = r.u32()? as usize;
    let user_dim = r.u32()? as usize;
    let layers = r.u32()? as usize;
    if layers > 64 {
        return Err(Error::format(format!("implausible layer count {layers}")));
    }
    let hidden = (0..layers).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let ngram_rows = r.u64()? as usize;
    let user_rows = r.u64()? as usize;
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
    let seed = r.u64()?;
    let config = ModelConfig {
        arch,
        features,
        ngram_dim,
        user_dim,
        hidden,
    };
    config
        .validate()
        .map_err(|e| Error::format(format!("bad checkpoint header: {e}")))?;
    let mut params = ModelParams::init(config, ngram_rows, user_rows, 0)?;
    check_vocab(&params, vocab)?;
    for t in params.tensors_mut() {
        r.f32s(t)?;
    }
    r.expect_end()?;
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(Checkpoint { params, seed })
}

/// An adapted vector for a user outside the population.
#[derive(Debug, Clone, PartialEq)]
pub struct UserVector {
    pub name: String,
    pub vector: Vec<f64>,
}

pub fn save_user_vector<W: Write>(w: W, user: &UserVector) -> Result<()> {
    let mut w = BinWriter::new(w, FileKind::UserVector)?;
    w.str(&user.name)?;
    w.u32(user.vector.len() as u32)?;
    w.f32s(&user.vector)?;
    w.finish()?;
    Ok(())
}

pub fn load_user_vector<R: Read>(r: R) -> Result<UserVector> {
    let mut r = BinReader::new(r, FileKind::UserVector)?;
    let name = r.str()?;
    let dim = r.u32()? as usize;
    if dim > 1 << 20 {
        return Err(Error::format(format!("implausible vector length {dim}")));
    }
    let mut vector = vec![0.0; dim];
    r.f32s(&mut vector)?;
    r.expect_end()?;
    Ok(UserVector { name, vector })
}
