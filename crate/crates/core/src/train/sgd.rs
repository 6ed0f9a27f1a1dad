use super::report::{Session, StopReason};
use super::{epoch_order, non_finite_loss, Monitor, TrainConfig, TrainReport};
use crate::embed::EncodedExample;
use crate::error::Result;
use crate::model::{loss, ModelParams};

/// Single-threaded SGD; the result is a pure function of the inputs.
pub(super) fn run(
    mut model: ModelParams,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    cfg: &TrainConfig,
    monitor: &mut Monitor<'_>,
) -> Result<(ModelParams, TrainReport)> {
    let mut session = Session::new(cfg, dev, monitor);
    if session.checkpoint(&model, 0)? {
        return session.finish(StopReason::Plateau);
    }
    let mut seen = 0u64;
    for epoch in 0..cfg.epochs {
        for i in epoch_order(train.len(), cfg.seed, epoch) {
            let ex = &train[i];
            let (fwd, grads) = model.gradients(ex)?;
            let l = loss(&fwd.probs, ex.label);
            if !l.is_finite() {
                return Err(non_finite_loss(seen, cfg.lr));
            }
            model.apply(&grads, cfg.lr);
            session.add_losses(l, 1);
            seen += 1;
            if seen.is_multiple_of(cfg.eval_every as u64) && session.checkpoint(&model, seen)? {
                return session.finish(StopReason::Plateau);
            }
        }
    }
    if session.last_examples() != Some(seen) && session.checkpoint(&model, seen)? {
        return session.finish(StopReason::Plateau);
    }
    session.finish(StopReason::Exhausted)
}
