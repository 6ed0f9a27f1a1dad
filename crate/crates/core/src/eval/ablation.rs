use std::fmt::Write as _;

use super::metrics::precision_at_1;
use super::pools::{build_pools, encode_pools, RankingPool};
use crate::corpus::Example;
use crate::embed::{encode_all, Feature};
use crate::error::{Error, Result};
use crate::model::{Arch, FeatureSet};
use crate::train::{train, TableSizes, TrainConfig};
use crate::vocab::Vocabulary;

/// Configurations for the context-length and feature-subset tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub context_lengths: Vec<usize>,
    /// Feature subsets, trained with the longest context length.
    pub feature_sets: Vec<FeatureSet>,
    pub archs: Vec<Arch>,
    pub pool_sizes: Vec<usize>,
    pub pool_count: usize,
    /// One pool seed for the whole sweep.
    pub pool_seed: u64,
}

impl Default for AblationGrid {
    fn default() -> Self {
        AblationGrid {
            context_lengths: vec![0, 1, 2, 5, 10, 25],
            feature_sets: vec![
                FeatureSet::of(&[Feature::Input]),
                FeatureSet::of(&[Feature::Input, Feature::Context]),
                FeatureSet::of(&[Feature::Input, Feature::Author]),
                FeatureSet::ALL,
            ],
            archs: vec![Arch::Single, Arch::Multi],
            pool_sizes: vec![10, 100],
            pool_count: 10_000,
            pool_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub row: String,
    pub arch: Arch,
    pub n: usize,
    /// `None` when the configuration could not be evaluated.
    pub p_at_1: Option<f64>,
}

/// P@1 grid: one row per configuration, one column per (arch, N).
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub row_label: String,
    pub rows: Vec<String>,
    pub archs: Vec<Arch>,
    pub pool_sizes: Vec<usize>,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn get(&self, row: &str, arch: Arch, n: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.row == row && c.arch == arch && c.n == n)
            .and_then(|c| c.p_at_1)
    }

    /// P@1 in percent; `-` marks an absent configuration.
    pub fn to_tsv(&self) -> String {
        let mut s = self.row_label.clone();
        for arch in &self.archs {
            for n in &self.pool_sizes {
                let _ = write!(s, "\t{arch} N={n}");
            }
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(row);
            for &arch in &self.archs {
                for &n in &self.pool_sizes {
                    match self.get(row, arch, n) {
                        Some(p) => {
                            let _ = write!(s, "\t{:.2}", 100.0 * p);
                        }
                        None => s.push_str("\t-"),
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

fn feature_row_name(fs: FeatureSet) -> String {
    if fs == FeatureSet::ALL {
        "All".to_string()
    } else {
        fs.to_string().replace('+', " + ")
    }
}

fn truncated(examples: &[Example], m: usize) -> Vec<Example> {
    examples
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.truncate_context(m);
            e
        })
        .collect()
}

struct Sweep<'a> {
    vocab: &'a Vocabulary,
    base: &'a TrainConfig,
    grid: &'a AblationGrid,
    /// Pools per N; `None` where the test set cannot fill them.
    pools: Vec<(usize, Option<Vec<RankingPool>>)>,
}

impl Sweep<'_> {
    fn run(
        &self,
        row: &str,
        features: FeatureSet,
        m: usize,
        split: (&[Example], &[Example]),
        cells: &mut Vec<AblationCell>,
    ) -> Result<()> {
        let ngrams = &self.vocab.ngrams;
        let train_set = encode_all(&truncated(split.0, m), ngrams);
        let dev_set = encode_all(&truncated(split.1, m), ngrams);
        let sizes = TableSizes {
            ngrams: ngrams.len(),
            users: self.vocab.users.len(),
        };
        for &arch in &self.grid.archs {
            let mut cfg = self.base.clone();
            cfg.model.arch = arch;
            cfg.model.features = features;
            log::info!("ablation: {row}, {arch}");
            let (model, _) = train(&train_set, &dev_set, sizes, &cfg)?;
            for (n, pools) in &self.pools {
                let p_at_1 = match pools {
                    Some(pools) => {
                        let pools: Vec<RankingPool> = pools
                            .iter()
                            .map(|p| {
                                let mut p = p.clone();
                                if p.context.len() > m {
                                    p.context.drain(..p.context.len() - m);
                                }
                                p
                            })
                            .collect();
                        Some(precision_at_1(&model, &encode_pools(&pools, ngrams))?)
                    }
                    None => None,
                };
                cells.push(AblationCell {
                    row: row.to_string(),
                    arch,
                    n: *n,
                    p_at_1,
                });
            }
        }
        Ok(())
    }
}

/// Trains one model per configuration and evaluates it on pools drawn once
/// from `test`. The context table uses the message feature alone at length
/// 0 and message plus context otherwise; the feature table uses the longest
/// context length in the grid.
pub fn ablation_sweep(
    train: &[Example],
    dev: &[Example],
    test: &[Example],
    vocab: &Vocabulary,
    base: &TrainConfig,
    grid: &AblationGrid,
) -> Result<(AblationTable, AblationTable)> {
    if grid.archs.is_empty() || grid.pool_sizes.is_empty() {
        return Err(Error::config(
            "ablation grid needs at least one architecture and pool size",
        ));
    }
    let pools = grid
        .pool_sizes
        .iter()
        .map(|&n| match build_pools(test, n, grid.pool_count, grid.pool_seed) {
            Ok(p) => Ok((n, Some(p))),
            Err(Error::Sampling(why)) => {
                log::warn!("N={n} pools unavailable: {why}");
                Ok((n, None))
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let sweep = Sweep {
        vocab,
        base,
        grid,
        pools,
    };
    let table = |row_label: &str, rows: Vec<String>, cells| AblationTable {
        row_label: row_label.to_string(),
        rows,
        archs: grid.archs.clone(),
        pool_sizes: grid.pool_sizes.clone(),
        cells,
    };

    let mut cells = Vec::new();
    for &m in &grid.context_lengths {
        let features = if m == 0 {
            FeatureSet::of(&[Feature::Input])
        } else {
            FeatureSet::of(&[Feature::Input, Feature::Context])
        };
        sweep.run(&m.to_string(), features, m, (train, dev), &mut cells)?;
    }
    let context_table = table(
        "context_up_to",
        grid.context_lengths.iter().map(|m| m.to_string()).collect(),
        cells,
    );

    let longest = grid.context_lengths.iter().copied().max().unwrap_or(0);
    let mut cells = Vec::new();
    for &fs in &grid.feature_sets {
        sweep.run(&feature_row_name(fs), fs, longest, (train, dev), &mut cells)?;
    }
    let feature_table = table(
        "feature",
        grid.feature_sets.iter().map(|&fs| feature_row_name(fs)).collect(),
        cells,
    );
    Ok((context_table, feature_table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rendering_marks_absent_cells() {
        let t = AblationTable {
            row_label: "feature".into(),
            rows: vec!["message".into(), "All".into()],
            archs: vec![Arch::Single, Arch::Multi],
            pool_sizes: vec![10],
            cells: vec![
                AblationCell {
                    row: "message".into(),
                    arch: Arch::Single,
                    n: 10,
                    p_at_1: Some(0.7445),
                },
                AblationCell {
                    row: "All".into(),
                    arch: Arch::Multi,
                    n: 10,
                    p_at_1: Some(0.866),
                },
            ],
        };
        assert_eq!(
            t.to_tsv(),
            "feature\tsingle N=10\tmulti N=10\nmessage\t74.45\t-\nAll\t-\t86.60\n"
        );
    }

    #[test]
    fn row_names() {
        assert_eq!(feature_row_name(FeatureSet::ALL), "All");
        assert_eq!(
            feature_row_name(FeatureSet::of(&[Feature::Input, Feature::Author])),
            "message + author"
        );
    }
}
