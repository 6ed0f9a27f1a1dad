//! Lock-free multi-worker SGD. Parameters live in shared `AtomicU64` cells
//! holding f64 bits; workers read and write them with relaxed loads and
//! stores, so concurrent updates to the same cell may overwrite each other.
//! Embedding rows are updated in place after every example. Each worker
//! keeps a private copy of the dense network weights and pushes its
//! accumulated change every `sync_every` examples, then refreshes the copy.

use std::sync::atomic::{AtomicU64, Ordering};

use super::report::{Session, StopReason};
use super::{epoch_order, non_finite_loss, Monitor, TrainConfig, TrainReport};
use crate::embed::{EmbeddingTable, EncodedExample};
use crate::error::Result;
use crate::model::{loss, ModelParams};

const NGRAM: usize = 0;
const USER: usize = 1;
const DENSE: usize = 2;

struct Shared {
    tensors: Vec<Vec<AtomicU64>>,
}

fn load(cell: &AtomicU64) -> f64 {
    f64::from_bits(cell.load(Ordering::Relaxed))
}

fn store(cell: &AtomicU64, v: f64) {
    cell.store(v.to_bits(), Ordering::Relaxed);
}

impl Shared {
    fn new(model: &ModelParams) -> Self {
        Shared {
            tensors: model
                .tensors()
                .iter()
                .map(|t| t.iter().map(|x| AtomicU64::new(x.to_bits())).collect())
                .collect(),
        }
    }

    fn read_into(&self, model: &mut ModelParams) {
        for (dst, src) in model.tensors_mut().into_iter().zip(&self.tensors) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = load(s));
        }
    }

    fn read_dense(&self, model: &mut ModelParams) {
        for (dst, src) in model.network.tensors_mut().into_iter().zip(&self.tensors[DENSE..]) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = load(s));
        }
    }

    fn read_row(&self, which: usize, table: &mut EmbeddingTable, row: u32) {
        let dim = table.dim();
        let src = &self.tensors[which][row as usize * dim..(row as usize + 1) * dim];
        table.row_mut(row).iter_mut().zip(src).for_each(|(d, s)| *d = load(s));
    }

    fn step_row(&self, which: usize, dim: usize, row: u32, grad: &[f64], lr: f64) {
        let cells = &self.tensors[which][row as usize * dim..(row as usize + 1) * dim];
        for (c, g) in cells.iter().zip(grad) {
            store(c, load(c) - lr * g);
        }
    }

    fn push_dense(&self, delta: &mut [Vec<f64>]) {
        for (cells, d) in self.tensors[DENSE..].iter().zip(delta.iter_mut()) {
            for (c, x) in cells.iter().zip(d.iter_mut()) {
                if *x != 0.0 {
                    store(c, load(c) + *x);
                    *x = 0.0;
                }
            }
        }
    }
}

struct Worker<'a> {
    shared: &'a Shared,
    local: ModelParams,
    delta: Vec<Vec<f64>>,
    lr: f64,
    sync_every: usize,
}

impl Worker<'_> {
    /// Returns the summed training loss over `batch`.
    fn run(mut self, train: &[EncodedExample], batch: &[usize], seen: u64) -> Result<f64> {
        let mut total = 0.0;
        for (k, &i) in batch.iter().enumerate() {
            let ex = &train[i];
            for bag in [&ex.input, &ex.context, &ex.response] {
                for &r in bag.rows() {
                    self.shared.read_row(NGRAM, &mut self.local.tables.ngram, r);
                }
            }
            self.shared.read_row(USER, &mut self.local.tables.user, ex.author);
            let (fwd, grads) = self.local.gradients(ex)?;
            let l = loss(&fwd.probs, ex.label);
            if !l.is_finite() {
                return Err(non_finite_loss(seen + k as u64, self.lr));
            }
            total += l;
            let lr = self.lr;
            for ((p, d), g) in self
                .local
                .network
                .tensors_mut()
                .into_iter()
                .zip(self.delta.iter_mut())
                .zip(grads.network.tensors())
            {
                for ((x, dx), gx) in p.iter_mut().zip(d.iter_mut()).zip(g) {
                    *x -= lr * gx;
                    *dx -= lr * gx;
                }
            }
            let nd = self.local.tables.ngram.dim();
            for (&r, g) in &grads.ngram_rows {
                self.shared.step_row(NGRAM, nd, r, g, lr);
            }
            let ud = self.local.tables.user.dim();
            for (&r, g) in &grads.user_rows {
                self.shared.step_row(USER, ud, r, g, lr);
            }
            if (k + 1) % self.sync_every == 0 {
                self.shared.push_dense(&mut self.delta);
                self.shared.read_dense(&mut self.local);
            }
        }
        self.shared.push_dense(&mut self.delta);
        Ok(total)
    }
}

pub(super) fn run(
    model: ModelParams,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    cfg: &TrainConfig,
    monitor: &mut Monitor<'_>,
) -> Result<(ModelParams, TrainReport)> {
    let shared = Shared::new(&model);
    let mut snapshot = model;
    let mut session = Session::new(cfg, dev, monitor);
    if session.checkpoint(&snapshot, 0)? {
        return session.finish(StopReason::Plateau);
    }
    let zero_delta: Vec<Vec<f64>> = snapshot.network.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut seen = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        for segment in order.chunks(cfg.eval_every) {
            let batches: Vec<Vec<usize>> = (0..cfg.workers)
                .map(|w| segment.iter().skip(w).step_by(cfg.workers).copied().collect())
                .collect();
            let results: Vec<Result<f64>> = std::thread::scope(|s| {
                let handles: Vec<_> = batches
                    .iter()
                    .map(|batch| {
                        let worker = Worker {
                            shared: &shared,
                            local: snapshot.clone(),
                            delta: zero_delta.clone(),
                            lr: cfg.lr,
                            sync_every: cfg.sync_every,
                        };
                        s.spawn(move || worker.run(train, batch, seen))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            for r in results {
                session.add_losses(r?, 0);
            }
            session.add_losses(0.0, segment.len() as u64);
            seen += segment.len() as u64;
            shared.read_into(&mut snapshot);
            if session.checkpoint(&snapshot, seen)? {
                return session.finish(StopReason::Plateau);
            }
        }
    }
    session.finish(StopReason::Exhausted)
}
