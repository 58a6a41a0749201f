//! Minibatch Adam training with a piecewise-constant learning rate.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{batch_losses, evaluate_losses, LossBreakdown, LossWeights, Transition};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::model::{CheckpointMeta, Model};
use crate::physics::{derive_seed, Dataset, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Minibatches per epoch; 0 is one full pass over the training pairs.
    pub batches_per_epoch: usize,
    pub lr: f64,
    /// Epoch fractions at which the learning rate is multiplied by `lr_factor`.
    pub lr_milestones: Vec<f64>,
    pub lr_factor: f64,
    /// Shuffle seed; a run config derives it from the global seed.
    #[serde(skip)]
    pub seed: u64,
    /// Step-loss horizon [s]; must equal the dataset's `dt_sample`.
    pub step_dt: f64,
    pub weights: LossWeights,
    /// Training trajectories held out for model selection (the last ones).
    pub n_val: usize,
    /// Validation pairs per evaluation, taken at a fixed stride; 0 is all.
    pub val_pairs: usize,
    /// Write a checkpoint every this many epochs (0 = only the best).
    pub checkpoint_every: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 256,
            batches_per_epoch: 4,
            lr: 1e-3,
            lr_milestones: vec![0.5, 0.75],
            lr_factor: 0.5,
            seed: 0,
            step_dt: 0.05,
            weights: LossWeights::default(),
            n_val: 8,
            val_pairs: 512,
            checkpoint_every: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("training.epochs and training.batch_size must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.lr_factor > 0.0) {
            return Err(Error::config("training.lr must be >= 0 and lr_factor > 0"));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1])
            || self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m))
        {
            return Err(Error::config("training.lr_milestones must be increasing fractions in [0, 1]"));
        }
        if !(self.step_dt > 0.0) {
            return Err(Error::config("training.step_dt must be positive"));
        }
        Ok(())
    }

    /// Learning rate of 0-based `epoch`: `lr * factor^k`, `k` the number of
    /// milestones at or below it.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| epoch >= (m * self.epochs as f64).round() as usize)
            .count();
        self.lr * self.lr_factor.powi(passed as i32)
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub l_deriv: f64,
    pub l_step: f64,
    pub l_smooth: f64,
    pub total: f64,
    pub val_total: f64,
}

impl EpochLog {
    pub fn train(&self) -> LossBreakdown {
        LossBreakdown { l_deriv: self.l_deriv, l_step: self.l_step, l_smooth: self.l_smooth, total: self.total }
    }
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Training pairs and validation pairs, both from the training split only.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: Vec<Transition>,
    pub val: Vec<Transition>,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
}

/// Consecutive-sample pairs of `traj`, with the exact derivative labels.
pub fn transitions(traj: &Trajectory) -> Result<Vec<Transition>> {
    if traj.derivs.len() != traj.states.len() {
        return Err(Error::config(format!("trajectory {} carries no derivative labels", traj.id)));
    }
    Ok((0..traj.len().saturating_sub(1))
        .map(|k| Transition {
            trajectory: traj.id,
            t: traj.times[k],
            state: traj.states[k],
            deriv: traj.derivs[k],
            next: traj.states[k + 1],
        })
        .collect())
}

/// Holds out the last `n_val` training trajectories. Test trajectories are
/// never touched.
pub fn split_training(dataset: &Dataset, n_val: usize) -> Result<DataSplit> {
    let train = dataset.train();
    if n_val >= train.len() {
        return Err(Error::config(format!("n_val = {n_val} leaves no training trajectories of {}", train.len())));
    }
    let cut = train.len() - n_val;
    let mut out = DataSplit { train: Vec::new(), val: Vec::new(), train_ids: Vec::new(), val_ids: Vec::new() };
    for (i, traj) in train.into_iter().enumerate() {
        let pairs = transitions(traj)?;
        if i < cut {
            out.train_ids.push(traj.id);
            out.train.extend(pairs);
        } else {
            out.val_ids.push(traj.id);
            out.val.extend(pairs);
        }
    }
    Ok(out)
}

fn strided(pairs: &[Transition], n: usize) -> Vec<Transition> {
    match n {
        n if n > 0 && n < pairs.len() => {
            let stride = pairs.len() as f64 / n as f64;
            (0..n).map(|i| pairs[(i as f64 * stride) as usize]).collect()
        }
        _ => pairs.to_vec(),
    }
}

pub fn evaluate_chunked(model: &Model, pairs: &[Transition], cfg: &TrainConfig) -> Result<LossBreakdown> {
    let parts = pairs
        .chunks(cfg.batch_size.max(1))
        .map(|c| Ok((evaluate_losses(model, c, cfg.step_dt, &effective_weights(model, cfg))?, c.len())))
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown::weighted_mean(&parts))
}

/// The Neural ODE has no streamfunction, so its smoothness weight is moot.
fn effective_weights(model: &Model, cfg: &TrainConfig) -> LossWeights {
    let mut w = cfg.weights;
    if !model.variant().has_flow() {
        w.flow = 0.0;
    }
    w
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    /// Weights after the last epoch.
    pub last: Model,
    pub log: Vec<EpochLog>,
    /// Ids of every trajectory that contributed a gradient.
    pub gradient_ids: Vec<usize>,
}

/// Trains `model` on the training split of `dataset`. With `ckpt_dir`,
/// writes `epoch_<n>.json` at the configured cadence.
pub fn train(mut model: Model, dataset: &Dataset, cfg: &TrainConfig, ckpt_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dt = dataset.manifest.dataset.dt_sample;
    if (cfg.step_dt - dt).abs() > 1e-12 {
        return Err(Error::config(format!("training.step_dt = {} must equal dataset.dt_sample = {dt}", cfg.step_dt)));
    }
    let split = split_training(dataset, cfg.n_val)?;
    let val = strided(&split.val, cfg.val_pairs);
    let weights = effective_weights(&model, cfg);
    let mut adam = AdamState::new(&model.params, cfg.lr, cfg.adam);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let per_epoch = match cfg.batches_per_epoch {
        0 => split.train.len().div_ceil(cfg.batch_size),
        n => n,
    };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut cursor = order.len();
    let mut shuffles = 0u64;

    for epoch in 0..cfg.epochs {
        adam.lr = cfg.lr_at(epoch);
        let mut parts = Vec::with_capacity(per_epoch);
        for _ in 0..per_epoch {
            if cursor + cfg.batch_size > order.len() {
                // reshuffle once the remaining pairs cannot fill a batch
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, shuffles));
                order.shuffle(&mut rng);
                shuffles += 1;
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(order.len());
            let batch: Vec<Transition> = order[cursor..end].iter().map(|&i| split.train[i]).collect();
            cursor = end;

            let tape = Tape::new();
            let bound = model.bind(&tape)?;
            let diverged = |reason: String, best: &(f64, Model, usize)| Error::Diverged {
                epoch: epoch + 1,
                reason,
                last_good: Some(Box::new(best.1.to_checkpoint(CheckpointMeta {
                    epoch: best.2,
                    val_total: best.0.is_finite().then_some(best.0),
                    train_total: None,
                }))),
            };
            let loss = match batch_losses(&bound, &batch, dt, &weights) {
                Err(e @ Error::Integration { .. }) => return Err(diverged(e.to_string(), &best)),
                other => other?,
            };
            let b = loss.breakdown();
            if !b.is_finite() {
                return Err(diverged(format!("non-finite loss {b:?}"), &best));
            }
            let grads = tape.backward(loss.total)?.params(&model.params);
            drop(bound);
            if let Err(Error::Diverged { reason, .. }) = adam_step(&mut model.params, &grads, &mut adam) {
                return Err(diverged(reason, &best));
            }
            parts.push((b, batch.len()));
        }
        let train_loss = LossBreakdown::weighted_mean(&parts);
        let val_total = evaluate_chunked(&model, &val, cfg)?.total;
        log.push(EpochLog {
            epoch: epoch + 1,
            lr: adam.lr,
            l_deriv: train_loss.l_deriv,
            l_step: train_loss.l_step,
            l_smooth: train_loss.l_smooth,
            total: train_loss.total,
            val_total,
        });
        if val_total < best.0 {
            best = (val_total, model.clone(), epoch + 1);
        }
        if let Some(dir) = ckpt_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let meta = CheckpointMeta { epoch: epoch + 1, val_total: Some(val_total), train_total: Some(train_loss.total) };
                model.to_checkpoint(meta).save(&dir.join(format!("epoch_{:05}.json", epoch + 1)))?;
            }
        }
    }
    let (_, best_model, best_epoch) = best;
    Ok(TrainOutcome { best: best_model, best_epoch, last: model, log, gradient_ids: split.train_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDescriptor, PhysicalContext, Variant};
    use crate::physics::{generate_dataset, DatasetConfig, ScenarioConfig, ScenarioKind, Split};

    fn tiny() -> Dataset {
        let ds = DatasetConfig { n_train: 4, n_test: 2, duration: 1.0, ..DatasetConfig::default() };
        generate_dataset(&ScenarioConfig::with_kind(ScenarioKind::SteadyVortex), &ds, 7, false).unwrap()
    }

    fn model(ds: &Dataset, variant: Variant) -> Model {
        let sc = ds.manifest.scenario_for(0).unwrap();
        let mut d = ModelDescriptor::for_variant(variant, 1);
        d.coeff_hidden = vec![8];
        d.stream_hidden = vec![8];
        d.node_hidden = vec![8];
        Model::new(d, PhysicalContext { body: sc.body, fluid: sc.fluid }).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig { epochs: 4, batch_size: 16, n_val: 1, val_pairs: 0, ..TrainConfig::default() }
    }

    #[test]
    fn lr_schedule_is_piecewise() {
        let c = TrainConfig { epochs: 2000, ..TrainConfig::default() };
        assert_eq!(c.lr_at(0), 1e-3);
        assert_eq!(c.lr_at(999), 1e-3);
        assert_eq!(c.lr_at(1000), 5e-4);
        assert_eq!(c.lr_at(1499), 5e-4);
        assert_eq!(c.lr_at(1500), 2.5e-4);
        assert_eq!(c.lr_at(1999), 2.5e-4);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let ds = tiny();
        let m = model(&ds, Variant::Fhnn);
        let c = TrainConfig { epochs: 1, lr: 0.0, ..cfg() };
        let out = train(m.clone(), &ds, &c, None).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.last.params, m.params);
    }

    #[test]
    fn logged_total_is_weighted_sum() {
        let ds = tiny();
        let out = train(model(&ds, Variant::Fhnn), &ds, &cfg(), None).unwrap();
        for row in &out.log {
            let w = cfg().weights;
            let sum = w.deriv * row.l_deriv + w.step * row.l_step + row.l_smooth;
            assert!((row.total - sum).abs() <= 1e-12 * row.total.max(1.0));
            assert_eq!(row.lr, cfg().lr_at(row.epoch - 1));
        }
    }

    #[test]
    fn test_trajectories_never_feed_gradients() {
        let ds = tiny();
        let out = train(model(&ds, Variant::Fhnn), &ds, &cfg(), None).unwrap();
        let test_ids: Vec<usize> = ds.split(Split::Test).map(|t| t.id).collect();
        assert!(out.gradient_ids.iter().all(|id| !test_ids.contains(id)));
        let split = split_training(&ds, 1).unwrap();
        assert!(split.train.iter().chain(&split.val).all(|p| !test_ids.contains(&p.trajectory)));
        assert_eq!(split.val_ids, vec![3]);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let ds = tiny();
        let a = train(model(&ds, Variant::NeuralOde), &ds, &cfg(), None).unwrap();
        let b = train(model(&ds, Variant::NeuralOde), &ds, &cfg(), None).unwrap();
        assert_eq!(a.last.params, b.last.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn nan_aborts_with_last_good() {
        let ds = tiny();
        let mut m = model(&ds, Variant::Fhnn);
        m.params.get_mut("stream.0.weight").unwrap()[[0, 0]] = f64::NAN;
        match train(m, &ds, &cfg(), None) {
            Err(Error::Diverged { epoch, last_good, .. }) => {
                assert_eq!(epoch, 1);
                assert!(last_good.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_csv_roundtrip() {
        let ds = tiny();
        let out = train(model(&ds, Variant::Fhnn), &ds, &cfg(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("logs/train.csv");
        write_log(&p, &out.log).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epoch,lr,l_deriv,l_step,l_smooth,total,val_total\n"));
        assert_eq!(read_log(&p).unwrap(), out.log);
    }
}
