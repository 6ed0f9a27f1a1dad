use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use crate::embed::{Feature, FeatureVectors};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// One MLP over the concatenated features and one logistic head.
    Single,
    /// One MLP and head per feature plus an aggregate MLP and head.
    Multi,
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "single-loss" => Ok(Arch::Single),
            "multi" | "multi-loss" => Ok(Arch::Multi),
            _ => Err(Error::config(format!("unknown architecture `{s}`"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Single => "single",
            Arch::Multi => "multi",
        })
    }
}

/// Which of input (I), context (C) and author (A) the model sees. The
/// response is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    bits: u8,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet { bits: 0b111 };

    fn bit(f: Feature) -> u8 {
        match f {
            Feature::Input => 1,
            Feature::Context => 2,
            Feature::Author => 4,
        }
    }

    pub fn of(features: &[Feature]) -> Self {
        FeatureSet {
            bits: features.iter().fold(0, |b, &f| b | Self::bit(f)),
        }
    }

    pub fn contains(self, f: Feature) -> bool {
        self.bits & Self::bit(f) != 0
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// Active features in I, C, A order.
    pub fn iter(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |&f| self.contains(f))
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 || bits > 0b111 {
            return Err(Error::format(format!("bad feature mask {bits:#b}")));
        }
        Ok(FeatureSet { bits })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// `all`, or names joined by `,` or `+`: `message`/`input`/`i`,
    /// `context`/`c`, `author`/`a`.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FeatureSet::ALL);
        }
        let mut bits = 0;
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            bits |= Self::bit(match part.to_ascii_lowercase().as_str() {
                "message" | "input" | "i" => Feature::Input,
                "context" | "c" => Feature::Context,
                "author" | "a" => Feature::Author,
                _ => return Err(Error::config(format!("unknown feature `{part}`"))),
            });
        }
        if bits == 0 {
            return Err(Error::config("feature set must not be empty"));
        }
        Ok(FeatureSet { bits })
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Feature::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub features: FeatureSet,
    pub ngram_dim: usize,
    pub user_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Multi,
            features: FeatureSet::ALL,
            ngram_dim: 16,
            user_dim: 16,
            hidden: vec![32, 16, 8],
        }
    }
}

impl ModelConfig {
    /// 300-dimensional embeddings and hidden layers [500, 300, 100].
    pub fn full_scale(arch: Arch) -> Self {
        ModelConfig {
            arch,
            features: FeatureSet::ALL,
            ngram_dim: 300,
            user_dim: 300,
            hidden: vec![500, 300, 100],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ngram_dim == 0 || self.user_dim == 0 {
            return Err(Error::config("embedding dimensions must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be non-empty and positive"));
        }
        if self.features.is_empty() {
            return Err(Error::config("at least one feature is required"));
        }
        Ok(())
    }

    pub fn feature_dim(&self, f: Feature) -> usize {
        match f {
            Feature::Author => self.user_dim,
            _ => self.ngram_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        *self.hidden.last().expect("validated")
    }
}

/// Logistic output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: Vec<f64>,
    /// Single element; a vector so every parameter is a slice.
    pub bias: Vec<f64>,
}

impl Head {
    pub fn zeros(inputs: usize) -> Self {
        Head {
            weight: vec![0.0; inputs],
            bias: vec![0.0],
        }
    }

    pub fn uniform(inputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        Head {
            weight: (0..inputs).map(|_| rng.gen_range(-bound..=bound)).collect(),
            bias: vec![0.0],
        }
    }

    pub fn logit(&self, h: &[f64]) -> f64 {
        self.weight.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.bias[0]
    }

    fn backward(&self, h: &[f64], dz: f64, grad: &mut Head, d_h: &mut [f64]) {
        grad.bias[0] += dz;
        for ((g, &x), (dh, &w)) in grad.weight.iter_mut().zip(h).zip(d_h.iter_mut().zip(&self.weight)) {
            *g += dz * x;
            *dh += dz * w;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLoss {
    pub features: Vec<Feature>,
    pub trunk: Mlp,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub feature: Feature,
    pub mlp: Mlp,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLoss {
    pub subnets: Vec<Subnet>,
    pub aggregate: Mlp,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Single(SingleLoss),
    Multi(MultiLoss),
}

/// Which prediction a probability belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    /// Pr(R | feature) from one subnet.
    Feature(Feature),
    /// Pr(R | all active features).
    Combined,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadKind::Feature(feat) => f.write_str(feat.name()),
            HeadKind::Combined => f.write_str("combined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardCache {
    Single {
        trunk: MlpCache,
        h: Vec<f64>,
    },
    Multi {
        subnets: Vec<(MlpCache, Vec<f64>)>,
        aggregate: MlpCache,
        h: Vec<f64>,
    },
}

impl ForwardCache {
    /// Sign pattern of every ReLU pre-activation.
    pub fn active_pattern(&self) -> Vec<bool> {
        match self {
            ForwardCache::Single { trunk, .. } => trunk.active_pattern(),
            ForwardCache::Multi { subnets, aggregate, .. } => subnets
                .iter()
                .flat_map(|(c, _)| c.active_pattern())
                .chain(aggregate.active_pattern())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// One probability per head, in [`Network::heads`] order; the combined
    /// prediction is last.
    pub probs: Vec<f64>,
    pub cache: ForwardCache,
}

impl Forward {
    /// Ranking score: the combined head's probability.
    pub fn score(&self) -> f64 {
        *self.probs.last().expect("at least one head")
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn check_width(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

impl Network {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let features: Vec<Feature> = config.features.iter().collect();
        let out = config.output_dim();
        Ok(match config.arch {
            Arch::Single => {
                let input = features.iter().map(|&f| config.feature_dim(f)).sum::<usize>() + config.ngram_dim;
                let trunk = Mlp::uniform(input, &config.hidden, rng);
                let head = Head::uniform(out, rng);
                Network::Single(SingleLoss { features, trunk, head })
            }
            Arch::Multi => {
                let subnets = features
                    .iter()
                    .map(|&feature| {
                        let mlp = Mlp::uniform(config.feature_dim(feature) + config.ngram_dim, &config.hidden, rng);
                        let head = Head::uniform(out, rng);
                        Subnet { feature, mlp, head }
                    })
                    .collect::<Vec<_>>();
                let aggregate = Mlp::uniform(out * subnets.len(), &config.hidden, rng);
                let head = Head::uniform(out, rng);
                Network::Multi(MultiLoss {
                    subnets,
                    aggregate,
                    head,
                })
            }
        })
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Network::Single(s) => Network::Single(SingleLoss {
                features: s.features.clone(),
                trunk: s.trunk.zeros_like(),
                head: Head::zeros(s.head.weight.len()),
            }),
            Network::Multi(m) => Network::Multi(MultiLoss {
                subnets: m
                    .subnets
                    .iter()
                    .map(|s| Subnet {
                        feature: s.feature,
                        mlp: s.mlp.zeros_like(),
                        head: Head::zeros(s.head.weight.len()),
                    })
                    .collect(),
                aggregate: m.aggregate.zeros_like(),
                head: Head::zeros(m.head.weight.len()),
            }),
        }
    }

    pub fn heads(&self) -> Vec<HeadKind> {
        match self {
            Network::Single(_) => vec![HeadKind::Combined],
            Network::Multi(m) => m
                .subnets
                .iter()
                .map(|s| HeadKind::Feature(s.feature))
                .chain([HeadKind::Combined])
                .collect(),
        }
    }

    fn heads_mut(&mut self) -> Vec<&mut Head> {
        match self {
            Network::Single(s) => vec![&mut s.head],
            Network::Multi(m) => m.subnets.iter_mut().map(|s| &mut s.head).chain([&mut m.head]).collect(),
        }
    }

    pub fn zero_heads(&mut self) {
        for h in self.heads_mut() {
            h.weight.iter_mut().for_each(|w| *w = 0.0);
            h.bias[0] = 0.0;
        }
    }

    /// Every parameter tensor in storage order: per MLP the layers'
    /// (weight, bias) pairs, followed by the head's (weight, bias); for the
    /// multi-loss network the subnets come first, then the aggregate.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        match self {
            Network::Single(s) => {
                out.extend(s.trunk.tensors());
                out.extend([s.head.weight.as_slice(), s.head.bias.as_slice()]);
            }
            Network::Multi(m) => {
                for sub in &m.subnets {
                    out.extend(sub.mlp.tensors());
                    out.extend([sub.head.weight.as_slice(), sub.head.bias.as_slice()]);
                }
                out.extend(m.aggregate.tensors());
                out.extend([m.head.weight.as_slice(), m.head.bias.as_slice()]);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        match self {
            Network::Single(s) => {
                out.extend(s.trunk.tensors_mut());
                out.extend([&mut s.head.weight, &mut s.head.bias]);
            }
            Network::Multi(m) => {
                for sub in &mut m.subnets {
                    out.extend(sub.mlp.tensors_mut());
                    out.extend([&mut sub.head.weight, &mut sub.head.bias]);
                }
                out.extend(m.aggregate.tensors_mut());
                out.extend([&mut m.head.weight, &mut m.head.bias]);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, fv: &FeatureVectors) -> Result<Forward> {
        if !fv.is_finite() {
            return Err(Error::NonFinite("feature vectors".into()));
        }
        match self {
            Network::Single(s) => {
                let mut x = Vec::new();
                for &f in &s.features {
                    x.extend_from_slice(fv.get(f));
                }
                x.extend_from_slice(&fv.response);
                let (h, trunk) = s.trunk.forward(&x)?;
                let p = sigmoid(s.head.logit(&h));
                Ok(Forward {
                    probs: vec![p],
                    cache: ForwardCache::Single { trunk, h },
                })
            }
            Network::Multi(m) => {
                let mut probs = Vec::with_capacity(m.subnets.len() + 1);
                let mut caches = Vec::with_capacity(m.subnets.len());
                let mut joined = Vec::new();
                for sub in &m.subnets {
                    let x = concat(fv.get(sub.feature), &fv.response);
                    let (h, cache) = sub.mlp.forward(&x)?;
                    probs.push(sigmoid(sub.head.logit(&h)));
                    joined.extend_from_slice(&h);
                    caches.push((cache, h));
                }
                let (h, aggregate) = m.aggregate.forward(&joined)?;
                probs.push(sigmoid(m.head.logit(&h)));
                Ok(Forward {
                    probs,
                    cache: ForwardCache::Multi {
                        subnets: caches,
                        aggregate,
                        h,
                    },
                })
            }
        }
    }

    /// Exact gradients of `sum_k weight[k] * BCE(p_k, y)` with respect to
    /// every network parameter and every feature vector. `dims` gives the
    /// widths of (I, C, A, R) for the returned feature gradients.
    pub fn backward(
        &self,
        fwd: &Forward,
        target: f64,
        head_weights: &[f64],
        dims: FeatureDims,
    ) -> Result<(Network, FeatureVectors)> {
        let heads = self.heads();
        if fwd.probs.len() != heads.len() || head_weights.len() != heads.len() {
            return Err(Error::Dimension {
                what: "forward cache heads",
                expected: heads.len(),
                actual: fwd.probs.len(),
            });
        }
        let dz: Vec<f64> = fwd
            .probs
            .iter()
            .zip(head_weights)
            .map(|(p, w)| w * (p - target))
            .collect();
        let mut grad = self.zeros_like();
        let mut dfeat = FeatureVectors {
            input: vec![0.0; dims.ngram],
            context: vec![0.0; dims.ngram],
            author: vec![0.0; dims.user],
            response: vec![0.0; dims.ngram],
        };
        match (self, &fwd.cache, &mut grad) {
            (Network::Single(s), ForwardCache::Single { trunk, h }, Network::Single(g)) => {
                check_width("single hidden", h, s.head.weight.len())?;
                let mut dh = vec![0.0; h.len()];
                s.head.backward(h, dz[0], &mut g.head, &mut dh);
                let dx = s.trunk.backward(trunk, &dh, &mut g.trunk)?;
                let mut offset = 0;
                for &f in &s.features {
                    let slot = dfeat.get_mut(f);
                    let w = slot.len();
                    check_width("single input", &dx[offset..(offset + w).min(dx.len())], w)?;
                    slot.copy_from_slice(&dx[offset..offset + w]);
                    offset += w;
                }
                check_width("single input", &dx[offset..], dims.ngram)?;
                dfeat.response.copy_from_slice(&dx[offset..]);
            }
            (Network::Multi(m), ForwardCache::Multi { subnets, aggregate, h }, Network::Multi(g)) => {
                if subnets.len() != m.subnets.len() {
                    return Err(Error::Dimension {
                        what: "forward cache subnets",
                        expected: m.subnets.len(),
                        actual: subnets.len(),
                    });
                }
                check_width("aggregate hidden", h, m.head.weight.len())?;
                let mut dh4 = vec![0.0; h.len()];
                m.head.backward(h, dz[m.subnets.len()], &mut g.head, &mut dh4);
                let djoined = m.aggregate.backward(aggregate, &dh4, &mut g.aggregate)?;
                let mut offset = 0;
                for (k, (sub, (cache, hk))) in m.subnets.iter().zip(subnets).enumerate() {
                    let w = hk.len();
                    check_width("subnet hidden", hk, sub.head.weight.len())?;
                    let mut dh = djoined
                        .get(offset..offset + w)
                        .ok_or(Error::Dimension {
                            what: "aggregate input",
                            expected: offset + w,
                            actual: djoined.len(),
                        })?
                        .to_vec();
                    offset += w;
                    let gs = &mut g.subnets[k];
                    sub.head.backward(hk, dz[k], &mut gs.head, &mut dh);
                    let dx = sub.mlp.backward(cache, &dh, &mut gs.mlp)?;
                    let slot = dfeat.get_mut(sub.feature);
                    let fw = slot.len();
                    check_width("subnet input", &dx, fw + dims.ngram)?;
                    for (s, d) in slot.iter_mut().zip(&dx[..fw]) {
                        *s += d;
                    }
                    for (r, d) in dfeat.response.iter_mut().zip(&dx[fw..]) {
                        *r += d;
                    }
                }
            }
            _ => return Err(Error::format("forward cache does not match the network architecture")),
        }
        Ok((grad, dfeat))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub ngram: usize,
    pub user: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_set_parsing() {
        assert_eq!("all".parse::<FeatureSet>().unwrap(), FeatureSet::ALL);
        let fs: FeatureSet = "message+author".parse().unwrap();
        assert!(fs.contains(Feature::Input) && fs.contains(Feature::Author));
        assert!(!fs.contains(Feature::Context));
        assert_eq!(fs.to_string(), "message+author");
        assert_eq!("i,c".parse::<FeatureSet>().unwrap().to_string(), "message+context");
        assert!("".parse::<FeatureSet>().is_err());
        assert!("bogus".parse::<FeatureSet>().is_err());
    }

    #[test]
    fn arch_parsing() {
        assert_eq!("Multi-Loss".parse::<Arch>().unwrap(), Arch::Multi);
        assert_eq!("single".parse::<Arch>().unwrap(), Arch::Single);
        assert!("deep".parse::<Arch>().is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(20.0) > 1.0 - 1e-8);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        c.validate().unwrap();
        c.hidden.clear();
        assert!(c.validate().is_err());
        let c = ModelConfig {
            ngram_dim: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert_eq!(ModelConfig::full_scale(Arch::Single).hidden, [500, 300, 100]);
    }
}
