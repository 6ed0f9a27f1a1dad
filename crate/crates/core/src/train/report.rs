use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::{Monitor, TrainConfig};
use crate::embed::{EncodedExample, Feature};
use crate::error::{Error, Result};
use crate::eval::accuracy_from_scores;
use crate::model::{head_losses, Arch, HeadKind, ModelParams};

/// Mean per-example loss of every head and classifier accuracy on a
/// labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct DevEvaluation {
    pub losses: Vec<(HeadKind, f64)>,
    pub accuracy: f64,
}

impl DevEvaluation {
    pub fn loss(&self, head: HeadKind) -> Option<f64> {
        self.losses.iter().find(|(h, _)| *h == head).map(|&(_, l)| l)
    }
}

/// Forward passes run in parallel; the sums are taken in example order so
/// the result does not depend on the thread count.
pub fn evaluate_dev(model: &ModelParams, dev: &[EncodedExample]) -> Result<DevEvaluation> {
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    let rows = dev
        .par_iter()
        .map(|e| {
            let fwd = model.forward_example(e)?;
            Ok((head_losses(&fwd.probs, e.label), fwd.score(), e.label.is_positive()))
        })
        .collect::<Result<Vec<_>>>()?;
    let heads = model.heads();
    let mut sums = vec![0.0; heads.len()];
    for (l, _, _) in &rows {
        sums.iter_mut().zip(l).for_each(|(s, x)| *s += x);
    }
    let n = dev.len() as f64;
    let scored: Vec<(f64, bool)> = rows.iter().map(|&(_, s, y)| (s, y)).collect();
    Ok(DevEvaluation {
        losses: heads.into_iter().zip(sums.into_iter().map(|s| s / n)).collect(),
        accuracy: accuracy_from_scores(&scored)?,
    })
}

/// Mean dev loss of every head of a multi-loss model.
pub fn per_feature_losses(model: &ModelParams, dev: &[EncodedExample]) -> Result<Vec<(HeadKind, f64)>> {
    if model.config.arch != Arch::Multi {
        return Err(Error::config("per-feature losses need a multi-loss model"));
    }
    Ok(evaluate_dev(model, dev)?.losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub checkpoint: usize,
    /// Training examples processed before this evaluation.
    pub examples: u64,
    pub dev: DevEvaluation,
    /// Mean training loss over the examples since the previous checkpoint.
    pub train_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Every epoch was consumed.
    Exhausted,
    Plateau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<CheckpointRecord>,
    /// Index into `records` of the returned model.
    pub best: usize,
    pub stop: StopReason,
}

const LOSS_COLUMNS: [HeadKind; 4] = [
    HeadKind::Feature(Feature::Input),
    HeadKind::Feature(Feature::Context),
    HeadKind::Feature(Feature::Author),
    HeadKind::Combined,
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl TrainReport {
    pub fn best_record(&self) -> &CheckpointRecord {
        &self.records[self.best]
    }

    /// Columns L1..L4 are the message, context, author and combined heads;
    /// `-` marks a head the model does not have.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("checkpoint\texamples\tL1\tL2\tL3\tL4\tdev_acc\tseconds\ttrain_loss\n");
        for r in &self.records {
            let losses: Vec<String> = LOSS_COLUMNS.iter().map(|&h| cell(r.dev.loss(h))).collect();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{:.3}\t{}",
                r.checkpoint,
                r.examples,
                losses.join("\t"),
                r.dev.accuracy,
                r.seconds,
                cell(r.train_loss)
            );
        }
        s
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }
}

/// Bookkeeping shared by the trainers: checkpoint records, the best model
/// so far, and the stopping rule.
pub(crate) struct Session<'c, 'm, 'a> {
    cfg: &'c TrainConfig,
    dev: &'c [EncodedExample],
    monitor: &'m mut Monitor<'a>,
    start: Instant,
    records: Vec<CheckpointRecord>,
    best: Option<(usize, ModelParams)>,
    loss_sum: f64,
    loss_count: u64,
}

impl<'c, 'm, 'a> Session<'c, 'm, 'a> {
    pub fn new(cfg: &'c TrainConfig, dev: &'c [EncodedExample], monitor: &'m mut Monitor<'a>) -> Self {
        Session {
            cfg,
            dev,
            monitor,
            start: Instant::now(),
            records: Vec::new(),
            best: None,
            loss_sum: 0.0,
            loss_count: 0,
        }
    }

    pub fn add_losses(&mut self, sum: f64, count: u64) {
        self.loss_sum += sum;
        self.loss_count += count;
    }

    /// Evaluates `model`, records it, and reports whether to stop.
    pub fn checkpoint(&mut self, model: &ModelParams, examples: u64) -> Result<bool> {
        let dev = evaluate_dev(model, self.dev)?;
        let train_loss = (self.loss_count > 0).then(|| self.loss_sum / self.loss_count as f64);
        self.loss_sum = 0.0;
        self.loss_count = 0;
        let record = CheckpointRecord {
            checkpoint: self.records.len(),
            examples,
            dev,
            train_loss,
            seconds: self.start.elapsed().as_secs_f64(),
        };
        log::info!(
            "checkpoint {} after {} examples: dev accuracy {:.4}",
            record.checkpoint,
            examples,
            record.dev.accuracy
        );
        (self.monitor)(model, &record)?;
        let improved = match &self.best {
            None => true,
            Some((i, _)) => record.dev.accuracy > self.records[*i].dev.accuracy,
        };
        if improved {
            self.best = Some((self.records.len(), model.clone()));
        }
        self.records.push(record);
        let accs: Vec<f64> = self.records.iter().map(|r| r.dev.accuracy).collect();
        Ok(self.cfg.plateau.should_stop(&accs))
    }

    pub fn last_examples(&self) -> Option<u64> {
        self.records.last().map(|r| r.examples)
    }

    pub fn finish(self, stop: StopReason) -> Result<(ModelParams, TrainReport)> {
        let (best, mut model) = self.best.ok_or(Error::Empty("checkpoint records"))?;
        model.round_to_storage();
        Ok((
            model,
            TrainReport {
                records: self.records,
                best,
                stop,
            },
        ))
    }
}
