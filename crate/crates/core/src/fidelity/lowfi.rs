use crate::causal::{NormStats, TripletSet};
use crate::error::{Error, Result};
use crate::eval::r2;
use crate::numkit::{streams, AdamState, Matrix, RngStream};
use crate::operator_net::{forward_batch, loss_and_grads, Batch, Checkpoint, NetConfig, NetParams};

use super::config::{HistoryEntry, TrainConfig, TrainHistory};

/// Draws minibatches without replacement, reshuffling at each epoch.
pub(crate) struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: RngStream,
}

impl EpochSampler {
    pub fn new(n: usize, rng: RngStream) -> Self {
        let mut s = Self { order: (0..n).collect(), cursor: n, rng };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    pub fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            let take = (size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

pub(crate) fn failure(iteration: usize, e: Error) -> Error {
    match e {
        Error::TrainingFailure { .. } => e,
        other => Error::TrainingFailure { iteration, reason: other.to_string() },
    }
}

/// Runs Adam on `params`, on `fixed` every step if given, else on batches from `sample`.
pub(crate) fn optimise(
    params: &mut NetParams<f64>,
    cfg: &TrainConfig,
    fixed: Option<&Batch<f64>>,
    mut sample: impl FnMut() -> Result<Batch<f64>>,
    mut on_checkpoint: impl FnMut(usize, f64, &NetParams<f64>) -> Result<()>,
) -> Result<()> {
    let mut adam = AdamState::new(params.matrices());
    adam.beta1 = cfg.adam.beta1;
    adam.beta2 = cfg.adam.beta2;
    adam.eps = cfg.adam.eps;
    for it in 0..cfg.iterations {
        let owned;
        let batch = match fixed {
            Some(b) => b,
            None => {
                owned = sample()?;
                &owned
            }
        };
        let (loss, grads) = loss_and_grads(params, batch).map_err(|e| failure(it, e))?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure { iteration: it, reason: format!("loss is {loss}") });
        }
        let lr = cfg.schedule.lr_at(it);
        adam.update(&mut params.matrices_mut(), &grads.matrices(), lr).map_err(|e| failure(it, e))?;
        let done = it + 1;
        if done % cfg.validate_every == 0 || done == cfg.iterations {
            on_checkpoint(done, loss, params)?;
        }
    }
    Ok(())
}

/// Result of offline training.
#[derive(Debug, Clone)]
pub struct LowFiRun {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Fits the low-fidelity operator on `train`; `val` R² is logged along the way.
pub fn train_lowfi(
    train: &TripletSet,
    val: Option<&TripletSet>,
    stats: &NormStats,
    cfg: &TrainConfig,
) -> Result<LowFiRun> {
    cfg.validate()?;
    stats.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if train.branch_dim() != stats.branch_dim() {
        return Err(Error::invalid(format!(
            "branch inputs have {} entries, scaling expects {}",
            train.branch_dim(),
            stats.branch_dim()
        )));
    }
    let net = NetConfig {
        branch_input_dim: train.branch_dim(),
        trunk_input_dim: train.trunk_dim(),
        width: cfg.width,
        depth: cfg.depth,
    };
    let root = RngStream::new(cfg.seed);
    let mut params = NetParams::init(&net, &mut root.derive(streams::INIT))?;

    let full = match cfg.batch_size {
        Some(b) if b < train.len() => None,
        _ => Some(train.full_batch()?),
    };
    let mut sampler = EpochSampler::new(train.len(), root.derive(streams::SAMPLING));
    let batch_size = cfg.batch_size.unwrap_or(train.len());
    let val_batch = val.filter(|v| !v.is_empty()).map(TripletSet::full_batch).transpose()?;

    let mut history = TrainHistory::default();
    optimise(
        &mut params,
        cfg,
        full.as_ref(),
        || train.batch(&sampler.next(batch_size)),
        |iteration, loss, p| {
            let val_r2 = match &val_batch {
                Some(vb) => {
                    let pred = forward_batch(p, &vb.branch, &vb.trunk).map_err(|e| failure(iteration, e))?;
                    r2(&pred, &vb.target).ok()
                }
                None => None,
            };
            log::debug!("lowfi iteration {iteration}: loss {loss:.3e}, val r2 {val_r2:?}");
            history.entries.push(HistoryEntry { iteration, loss, val_r2 });
            Ok(())
        },
    )?;
    Ok(LowFiRun { checkpoint: Checkpoint::new(params, *stats), history })
}

/// Normalised low-fidelity outputs for a dense batch.
pub fn lf_forward(lf: &Checkpoint, branch: &Matrix<f64>, trunk: &Matrix<f64>) -> Result<Vec<f64>> {
    forward_batch(&lf.params, branch, trunk)
}

/// Low-fidelity settlement (mm) at `point` after step `t_i`.
pub fn lf_predict(
    lf: &Checkpoint,
    grouting_kpa: &[f64],
    face_kpa: &[f64],
    t_i: usize,
    point: (f64, f64),
) -> Result<f64> {
    let branch = lf.norm.embed_branch(grouting_kpa, face_kpa, t_i)?;
    let trunk = lf.norm.trunk_input(point);
    let out = lf_forward(lf, &Matrix::row_vector(branch), &Matrix::row_vector(trunk.to_vec()))?;
    Ok(lf.norm.denormalize_settlement(out[0]))
}

/// Low-fidelity field (mm) over `points` after step `t_i`.
pub fn lf_field(
    lf: &Checkpoint,
    grouting_kpa: &[f64],
    face_kpa: &[f64],
    t_i: usize,
    points: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let branch = lf.norm.embed_branch(grouting_kpa, face_kpa, t_i)?;
    let branches = Matrix::from_fn(points.len(), branch.len(), |_, c| branch[c]);
    let trunk: Vec<[f64; 2]> = points.iter().map(|&p| lf.norm.trunk_input(p)).collect();
    let out = lf_forward(lf, &branches, &Matrix::from_rows(&trunk)?)?;
    Ok(out.into_iter().map(|v| lf.norm.denormalize_settlement(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_covers_epoch_without_repeats() {
        let mut s = EpochSampler::new(10, RngStream::new(1));
        let mut first: Vec<usize> = s.next(4);
        first.extend(s.next(6));
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert_eq!(s.next(25).len(), 25);
    }
}
