//! Seeded mini-batch SGD with optional global-norm gradient clipping.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

use super::run::{backward_inner, forward_inner, Cache};
use super::{init_params, plan, Loss, NetPlan, NetworkParams, NetworkSpec, TrainConfig};

/// Training data: one input list per sample (one tensor per network branch)
/// with the matching flat target.
#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub inputs: Vec<Vec<Tensor>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, inputs: Vec<Tensor>, target: Vec<f64>) {
        self.inputs.push(inputs);
        self.targets.push(target);
    }
}

/// Snapshot of one applied SGD step, handed to observers after clipping.
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub batch: usize,
    /// The gradients exactly as applied (post-clip).
    pub grads: &'a NetworkParams,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub params: NetworkParams,
    /// Mean training loss per epoch; length equals `config.epochs`.
    pub loss_history: Vec<f64>,
}

/// Incremental trainer; callers drive it one epoch at a time, which lets the
/// meta-network layer interleave validation measurements.
pub struct Trainer {
    plan: NetPlan,
    cfg: TrainConfig,
    pub params: NetworkParams,
    rng: ChaCha8Rng,
    epoch: usize,
    order: Vec<usize>,
    cache: Cache,
}

impl Trainer {
    pub fn new(spec: &NetworkSpec, cfg: &TrainConfig, n_samples: usize) -> Result<Self> {
        cfg.validate()?;
        if n_samples == 0 {
            return Err(Error::EmptyInput("training set is empty".into()));
        }
        if cfg.batch_size > n_samples {
            return Err(Error::InvalidConfig(alloc::format!(
                "batch_size {} exceeds training-set size {}",
                cfg.batch_size,
                n_samples
            )));
        }
        let plan = plan(spec)?;
        let params = init_params(spec, cfg.seed)?;
        Ok(Self {
            plan,
            cfg: cfg.clone(),
            params,
            rng: seed::rng(seed::mix(cfg.seed, 1)),
            epoch: 0,
            order: (0..n_samples).collect(),
            cache: Cache::empty(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Run one epoch of mini-batch SGD; returns the mean training loss over
    /// the samples as visited.
    pub fn step_epoch(&mut self, data: &TrainSet) -> Result<f64> {
        self.step_epoch_inner(data, None::<&mut fn(StepInfo<'_>)>)
    }

    /// [`Self::step_epoch`] with an observer that sees every applied
    /// (post-clip) step.
    pub fn step_epoch_observed<F>(&mut self, data: &TrainSet, observer: &mut F) -> Result<f64>
    where
        F: FnMut(StepInfo<'_>) + ?Sized,
    {
        self.step_epoch_inner(data, Some(observer))
    }

    fn step_epoch_inner<F>(
        &mut self,
        data: &TrainSet,
        mut observer: Option<&mut F>,
    ) -> Result<f64>
    where
        F: FnMut(StepInfo<'_>) + ?Sized,
    {
        if data.len() != self.order.len() {
            return Err(Error::InvalidConfig(
                "training set size changed between epochs".into(),
            ));
        }
        self.order.shuffle(&mut self.rng);

        let mut epoch_loss = 0.0;
        let mut grads = NetworkParams::zeros_like(&self.plan.params);
        for (batch_idx, batch) in self.order.chunks(self.cfg.batch_size).enumerate() {
            grads.scale(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &sample in batch {
                let out = forward_inner(
                    &self.plan,
                    &self.params,
                    &data.inputs[sample],
                    Some(&mut self.rng),
                    Some(&mut self.cache),
                )?;
                let target = &data.targets[sample];
                let Loss::Mse = self.cfg.loss;
                let d = out.len() as f64;
                let mut sample_loss = 0.0;
                let mut grad = Vec::with_capacity(out.len());
                for (y, t) in out.iter().zip(target) {
                    let r = y - t;
                    sample_loss += r * r / d;
                    grad.push(2.0 * r / d * scale);
                }
                if !sample_loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch: self.epoch,
                        batch: batch_idx,
                    });
                }
                epoch_loss += sample_loss;
                backward_inner(&self.plan, &self.params, &self.cache, grad, &mut grads);
            }
            if let Some(c) = self.cfg.clip_norm {
                clip_gradients(&mut grads, c);
            }
            if let Some(obs) = observer.as_mut() {
                obs(StepInfo {
                    epoch: self.epoch,
                    batch: batch_idx,
                    grads: &grads,
                });
            }
            self.params.add_scaled(&grads, -self.cfg.learning_rate);
        }
        self.epoch += 1;
        Ok(epoch_loss / data.len() as f64)
    }
}

/// Scale gradients so their global L2 norm is at most `clip_norm`,
/// preserving direction; returns the resulting norm. Idempotent.
pub fn clip_gradients(grads: &mut NetworkParams, clip_norm: f64) -> f64 {
    debug_assert!(clip_norm > 0.0);
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
        clip_norm
    } else {
        norm
    }
}

/// Train a freshly initialized network; reproducible for a given
/// `cfg.seed`, with `loss_history.len() == cfg.epochs`.
pub fn train(spec: &NetworkSpec, cfg: &TrainConfig, data: &TrainSet) -> Result<Trained> {
    let mut trainer = Trainer::new(spec, cfg, data.len())?;
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        loss_history.push(trainer.step_epoch(data)?);
    }
    Ok(Trained {
        params: trainer.params,
        loss_history,
    })
}

/// Mean MSE of the inference-mode network over a data set.
pub fn mse_loss(spec: &NetworkSpec, params: &NetworkParams, data: &TrainSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("loss over an empty set".into()));
    }
    let plan = plan(spec)?;
    let mut total = 0.0;
    for (ins, target) in data.inputs.iter().zip(&data.targets) {
        let out = forward_inner(&plan, params, ins, None, None)?;
        let d = out.len() as f64;
        total += out
            .iter()
            .zip(target)
            .map(|(y, t)| (y - t) * (y - t) / d)
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}
