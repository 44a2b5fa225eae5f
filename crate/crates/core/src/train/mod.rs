//! Minibatch gradient descent on the pair objective.
//!
//! Plain SGD with a constant learning rate. Per-pair forward/backward work
//! inside a batch runs in parallel against the pre-step parameters; the
//! batch gradient is summed in a fixed order so results do not depend on
//! the thread count.

mod checkpoint;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{validate_pairs, PatchPair, PatchStore};
use crate::error::{Error, Result};
use crate::eval::pair_distances;
use crate::loss::{pair_loss, pair_loss_grad, LabeledPair, LossConfig};
use crate::model::{backward, forward, Architecture, NetworkParams, ParamGrads};
use crate::real::{Precision, Real};
use crate::tensor::Tensor;

/// Pairs handled by one parallel work item. Fixed, so the summation order
/// of the batch gradient is fixed too.
const GRAD_CHUNK: usize = 8;

/// Above this many training pairs the epoch objective uses a fixed-seed
/// subsample of this size.
pub const OBJECTIVE_SUBSAMPLE: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_rel_tol: f64,
    pub loss: LossConfig,
    pub seed: u64,
    pub precision: Precision,
    /// Half similar, half dissimilar per batch while both kinds last.
    pub balanced_batches: bool,
    /// Divide the summed batch gradient by the batch size.
    pub mean_reduction: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            batch_size: 128,
            max_epochs: 20,
            plateau_patience: 10,
            plateau_rel_tol: 1e-3,
            loss: LossConfig::default(),
            seed: 1,
            precision: Precision::F32,
            balanced_batches: true,
            mean_reduction: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be >= 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::config("plateau_patience", "must be >= 1"));
        }
        if !(self.plateau_rel_tol > 0.0 && self.plateau_rel_tol < 1.0) {
            return Err(Error::config("plateau_rel_tol", "must lie in (0, 1)"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 0 is the initial parameters, before any update.
    pub epoch: usize,
    pub objective: f64,
    pub heldout_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn objectives(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.objective).collect()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).map(|e| e.objective)
    }

    fn push(&mut self, record: EpochRecord) {
        let better = self
            .best_objective()
            .is_none_or(|best| record.objective < best);
        if better {
            self.best_epoch = self.epochs.len();
        }
        self.epochs.push(record);
    }

    /// `epoch,objective` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,objective\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{}\n", e.epoch, e.objective));
        }
        s
    }
}

/// Plateau rule: stop once `plateau_patience` consecutive epochs each fail
/// to beat the best objective so far by more than `plateau_rel_tol`
/// (relative), or once `max_epochs` training epochs have run.
pub fn should_stop(history: &TrainHistory, cfg: &TrainConfig) -> bool {
    let obj = history.objectives();
    let Some((&first, rest)) = obj.split_first() else {
        return false;
    };
    if history.epochs.last().map(|e| e.epoch).unwrap_or(0) >= cfg.max_epochs {
        return true;
    }
    let mut best = first;
    let mut stale = 0usize;
    for &v in rest {
        if v < best - cfg.plateau_rel_tol * best.abs() {
            stale = 0;
        } else {
            stale += 1;
        }
        best = best.min(v);
    }
    stale >= cfg.plateau_patience
}

fn accumulate<T: Real>(acc: &mut Option<ParamGrads<T>>, g: &ParamGrads<T>) -> Result<()> {
    match acc {
        Some(a) => a.axpy(T::one(), g),
        None => {
            *acc = Some(g.clone());
            Ok(())
        }
    }
}

/// Loss and gradient summed over `items`, in order. `None` when every
/// pair sits past its margin.
fn chunk_gradient<T: Real>(
    params: &NetworkParams<T>,
    items: impl Iterator<Item = (Tensor<T>, Tensor<T>, bool)>,
    loss: &LossConfig,
) -> Result<(f64, Option<ParamGrads<T>>)> {
    let mut total = 0.0;
    let mut grads = None;
    for (x1, x2, similar) in items {
        let (f1, c1) = forward(params, &x1)?;
        let (f2, c2) = forward(params, &x2)?;
        let (l, g1, g2) = pair_loss_grad(&f1, &f2, similar, loss)?;
        total += l.as_f64();
        if g1.data().iter().all(|&v| v == T::zero()) {
            continue;
        }
        accumulate(&mut grads, &backward(&c1, &g1)?.0)?;
        accumulate(&mut grads, &backward(&c2, &g2)?.0)?;
    }
    Ok((total, grads))
}

/// Summed loss and gradient of a batch given as input tensors. Chunks of
/// `GRAD_CHUNK` pairs run in parallel and are added in batch order.
pub fn batch_gradient<T: Real>(
    params: &NetworkParams<T>,
    inputs: &[(Tensor<T>, Tensor<T>, bool)],
    loss: &LossConfig,
) -> Result<(f64, Option<ParamGrads<T>>)> {
    let partials: Vec<_> = inputs
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| chunk_gradient(params, chunk.iter().cloned(), loss))
        .collect::<Result<_>>()?;
    sum_partials(partials)
}

fn sum_partials<T: Real>(
    partials: Vec<(f64, Option<ParamGrads<T>>)>,
) -> Result<(f64, Option<ParamGrads<T>>)> {
    let mut objective = 0.0;
    let mut grads: Option<ParamGrads<T>> = None;
    for (l, g) in &partials {
        objective += l;
        if let Some(g) = g {
            accumulate(&mut grads, g)?;
        }
    }
    Ok((objective, grads))
}

fn apply_step<T: Real>(
    params: &mut NetworkParams<T>,
    objective: f64,
    grads: Option<ParamGrads<T>>,
    batch_len: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    if !objective.is_finite() {
        return Err(Error::Divergence(format!("batch objective is {objective}")));
    }
    let Some(grads) = grads else {
        return Ok(objective);
    };
    if !grads.all_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    let mut step = cfg.learning_rate;
    if cfg.mean_reduction {
        step /= batch_len as f64;
    }
    params.axpy(T::from_f64(-step), &grads)?;
    if !params.all_finite() {
        return Err(Error::Divergence("parameters became non-finite".into()));
    }
    Ok(objective)
}

/// One gradient step on `batch`. Returns the batch objective measured
/// before the update.
pub fn sgd_step<T: Real>(
    params: &mut NetworkParams<T>,
    batch: &[PatchPair],
    stores: &[PatchStore],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    validate_pairs(stores, batch)?;
    let snapshot: &NetworkParams<T> = params;
    let partials: Vec<_> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let items = chunk.iter().map(|p| {
                let store = &stores[p.scene];
                (
                    store.input::<T>(p.idx1),
                    store.input::<T>(p.idx2),
                    p.similar,
                )
            });
            chunk_gradient(snapshot, items, &cfg.loss)
        })
        .collect::<Result<_>>()?;
    let (objective, grads) = sum_partials(partials)?;
    apply_step(params, objective, grads, batch.len(), cfg)
}

/// [`sgd_step`] on pre-built input tensors, for networks whose input size
/// differs from the stored patch size.
pub fn sgd_step_inputs<T: Real>(
    params: &mut NetworkParams<T>,
    inputs: &[(Tensor<T>, Tensor<T>, bool)],
    cfg: &TrainConfig,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (objective, grads) = batch_gradient(params, inputs, &cfg.loss)?;
    apply_step(params, objective, grads, inputs.len(), cfg)
}

/// Summed pair loss over `pairs`.
pub fn objective<T: Real>(
    params: &NetworkParams<T>,
    stores: &[PatchStore],
    pairs: &[PatchPair],
    loss: &LossConfig,
) -> Result<f64> {
    let (d, y) = pair_distances(params, stores, pairs)?;
    let total: f64 = d
        .iter()
        .zip(&y)
        .map(|(&d, &similar)| pair_loss(LabeledPair { d, similar }, loss))
        .sum();
    if !total.is_finite() {
        return Err(Error::Divergence(format!("objective is {total}")));
    }
    Ok(total)
}

/// Batches of pair indices for one epoch.
pub fn epoch_batches(
    pairs: &[PatchPair],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    if !cfg.balanced_batches {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(rng);
        return order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..pairs.len()).partition(|&i| pairs[i].similar);
    pos.shuffle(rng);
    neg.shuffle(rng);
    let (mut pos, mut neg) = (pos.into_iter(), neg.into_iter());
    let half = cfg.batch_size / 2;
    let mut batches = Vec::new();
    loop {
        let mut batch: Vec<usize> = pos.by_ref().take(half).collect();
        let room = cfg.batch_size - batch.len();
        batch.extend(neg.by_ref().take(room));
        let room = cfg.batch_size - batch.len();
        batch.extend(pos.by_ref().take(room));
        if batch.is_empty() {
            break;
        }
        batches.push(batch);
    }
    batches
}

/// Trains the full network from `Glorot(seed)` initial parameters.
pub fn train<T: Real>(
    stores: &[PatchStore],
    pairs: &[PatchPair],
    cfg: &TrainConfig,
) -> Result<(NetworkParams<T>, TrainHistory)> {
    let init = NetworkParams::init(Architecture::full(), cfg.seed)?;
    train_from(init, stores, pairs, None, cfg, |_| {})
}

/// Full training loop. Returns the parameters of the epoch with the lowest
/// training objective (epoch 0 being the initial parameters).
pub fn train_from<T: Real>(
    init: NetworkParams<T>,
    stores: &[PatchStore],
    pairs: &[PatchPair],
    heldout: Option<&[PatchPair]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkParams<T>, TrainHistory)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    validate_pairs(stores, pairs)?;
    if let Some(h) = heldout {
        validate_pairs(stores, h)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval_pairs: Vec<PatchPair> = if pairs.len() > OBJECTIVE_SUBSAMPLE {
        let mut idx = index::sample(&mut rng, pairs.len(), OBJECTIVE_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pairs[i]).collect()
    } else {
        pairs.to_vec()
    };

    let mut params = init;
    let mut best = params.clone();
    let mut history = TrainHistory::default();
    let record = |epoch: usize, params: &NetworkParams<T>| -> Result<EpochRecord> {
        Ok(EpochRecord {
            epoch,
            objective: objective(params, stores, &eval_pairs, &cfg.loss)?,
            heldout_objective: heldout
                .map(|h| objective(params, stores, h, &cfg.loss))
                .transpose()?,
        })
    };

    let first = record(0, &params)?;
    on_epoch(&first);
    history.push(first);

    for epoch in 1..=cfg.max_epochs {
        for batch in epoch_batches(pairs, cfg, &mut rng) {
            let batch: Vec<PatchPair> = batch.into_iter().map(|i| pairs[i]).collect();
            sgd_step(&mut params, &batch, stores, cfg)?;
        }
        let rec = record(epoch, &params)?;
        on_epoch(&rec);
        history.push(rec);
        if history.best_epoch == history.epochs.len() - 1 {
            best = params.clone();
        }
        if should_stop(&history, cfg) {
            break;
        }
    }
    Ok((best, history))
}
