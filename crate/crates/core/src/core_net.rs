//! The core network: a learned mapping from dataset encodings to
//! hyperparameters. Each encoder matrix enters through its own
//! convolution+relu branch (shrinking it before flattening), the flattened
//! branches are concatenated into a tanh trunk with dropout, and one output
//! unit per hyperparameter produces a value in the transformed label space,
//! which inverts back to an in-bounds vector.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::encode::EncodedMeta;
use crate::env::{HeadActivation, HyperparamSpec, HyperparamVector};
use crate::error::{Error, Result};
use crate::label::{inverse_transform, LabeledExample};
use crate::nn::{
    forward, mse_loss, Activation, HeadSpec, LayerSpec, NetworkParams, NetworkSpec, StepInfo,
    TrainConfig, TrainSet, Trainer,
};
use crate::seed;
use crate::tensor::Tensor;

/// Architecture and training knobs for [`build_core_net`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreNetConfig {
    /// Square kernel edge of each branch convolution.
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_channels: usize,
    /// Widths of the dense trunk layers (tanh, dropout after each).
    pub trunk_widths: Vec<usize>,
    pub dropout: f64,
    /// SGD settings; `clip_norm` must be set.
    pub train: TrainConfig,
}

impl Default for CoreNetConfig {
    fn default() -> Self {
        Self {
            conv_kernel: 3,
            conv_stride: 2,
            conv_channels: 4,
            trunk_widths: vec![64, 64],
            dropout: 0.1,
            train: TrainConfig {
                learning_rate: 0.02,
                epochs: 300,
                batch_size: 8,
                clip_norm: Some(5.0),
                seed: 0,
                loss: crate::nn::Loss::Mse,
            },
        }
    }
}

/// A built core-network architecture bound to one encoding shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreNetSpec {
    pub net: NetworkSpec,
    /// Expected `(rows, cols)` of each input matrix.
    pub meta_shape: Vec<(usize, usize)>,
    /// Branches too small for the convolution fall back to plain flatten.
    pub degraded: Vec<bool>,
}

/// A trained (or deliberately untrained) core network.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreNetModel {
    pub spec: CoreNetSpec,
    pub params: NetworkParams,
    pub hyper_specs: Vec<HyperparamSpec>,
    pub encoder_hash: u64,
}

/// Training output: the model plus per-epoch loss curves.
#[derive(Debug, Clone)]
pub struct CoreNetTraining {
    pub model: CoreNetModel,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Build the architecture for a given encoding shape and hyperparameter
/// schema: one conv branch per matrix, dense tanh trunk, one output unit per
/// hyperparameter with that parameter's declared head activation.
pub fn build_core_net(
    meta_shape: &[(usize, usize)],
    hyper_specs: &[HyperparamSpec],
    cfg: &CoreNetConfig,
) -> Result<CoreNetSpec> {
    if meta_shape.is_empty() {
        return Err(Error::InvalidSpec("encoder exports no matrices".into()));
    }
    if hyper_specs.is_empty() {
        return Err(Error::InvalidSpec("no hyperparameters to predict".into()));
    }
    for s in hyper_specs {
        s.validate()?;
    }
    let mut input_shapes = Vec::with_capacity(meta_shape.len());
    let mut branches = Vec::with_capacity(meta_shape.len());
    let mut degraded = Vec::with_capacity(meta_shape.len());
    for &(rows, cols) in meta_shape {
        input_shapes.push(crate::tensor::Shape::Grid {
            h: rows,
            w: cols,
            c: 1,
        });
        if rows >= cfg.conv_kernel && cols >= cfg.conv_kernel {
            branches.push(vec![
                LayerSpec::Conv2d {
                    kernel_h: cfg.conv_kernel,
                    kernel_w: cfg.conv_kernel,
                    in_channels: 1,
                    out_channels: cfg.conv_channels,
                    stride: cfg.conv_stride,
                },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Flatten,
            ]);
            degraded.push(false);
        } else {
            branches.push(vec![LayerSpec::Flatten]);
            degraded.push(true);
        }
    }

    let concat_width: usize = meta_shape
        .iter()
        .zip(&degraded)
        .map(|(&(rows, cols), &deg)| {
            if deg {
                rows * cols
            } else {
                rows.div_ceil(cfg.conv_stride) * cols.div_ceil(cfg.conv_stride) * cfg.conv_channels
            }
        })
        .sum();

    let mut trunk = Vec::new();
    let mut width = concat_width;
    for &w in &cfg.trunk_widths {
        trunk.push(LayerSpec::Dense {
            in_dim: width,
            out_dim: w,
        });
        trunk.push(LayerSpec::Activation(Activation::Tanh));
        if cfg.dropout > 0.0 {
            trunk.push(LayerSpec::Dropout { rate: cfg.dropout });
        }
        width = w;
    }
    // One output unit per hyperparameter (each row of this layer is that
    // parameter's own linear map), then per-parameter activations.
    trunk.push(LayerSpec::Dense {
        in_dim: width,
        out_dim: hyper_specs.len(),
    });
    let heads = hyper_specs
        .iter()
        .map(|s| HeadSpec {
            in_width: 1,
            layers: vec![LayerSpec::Activation(match s.head_activation {
                HeadActivation::Tanh => Activation::Tanh,
                HeadActivation::Elu => Activation::Elu,
            })],
        })
        .collect();

    let net = NetworkSpec {
        input_shapes,
        branches,
        trunk,
        heads,
    };
    // Surface shape errors now rather than at first use.
    net.output_width()?;
    Ok(CoreNetSpec {
        net,
        meta_shape: meta_shape.to_vec(),
        degraded,
    })
}

fn meta_inputs(meta: &EncodedMeta) -> Vec<Tensor> {
    meta.matrices.iter().map(|m| m.as_tensor()).collect()
}

fn check_meta(model_shape: &[(usize, usize)], hash: u64, meta: &EncodedMeta) -> Result<()> {
    if meta.encoder_hash != hash {
        return Err(Error::SpecHashMismatch {
            expected: hash,
            got: meta.encoder_hash,
        });
    }
    if meta.shape() != model_shape {
        return Err(Error::InvalidSpec(
            "encoding shape does not match the model".into(),
        ));
    }
    Ok(())
}

/// Train on labeled examples with a 10% validation holdout.
pub fn train_core_net(
    examples: &[LabeledExample],
    hyper_specs: &[HyperparamSpec],
    cfg: &CoreNetConfig,
    seed_value: u64,
) -> Result<CoreNetTraining> {
    train_core_net_observed(examples, hyper_specs, cfg, seed_value, None)
}

/// [`train_core_net`] with a per-step observer (it sees the applied,
/// post-clip gradients).
pub fn train_core_net_observed(
    examples: &[LabeledExample],
    hyper_specs: &[HyperparamSpec],
    cfg: &CoreNetConfig,
    seed_value: u64,
    mut observer: Option<&mut dyn FnMut(StepInfo<'_>)>,
) -> Result<CoreNetTraining> {
    if examples.len() < 2 {
        return Err(Error::EmptyInput(
            "need at least 2 labeled examples".into(),
        ));
    }
    if cfg.train.clip_norm.is_none() {
        return Err(Error::InvalidConfig(
            "core-network training requires clip_norm".into(),
        ));
    }
    let first = &examples[0].meta;
    let shape = first.shape();
    for ex in examples {
        check_meta(&shape, first.encoder_hash, &ex.meta)?;
        if ex.raw_label.len() != hyper_specs.len()
            || ex.transformed_label.len() != hyper_specs.len()
        {
            return Err(Error::InvalidConfig(
                "label width does not match the schema".into(),
            ));
        }
    }
    let spec = build_core_net(&shape, hyper_specs, cfg)?;

    // Seeded 10% validation holdout.
    let n = examples.len();
    let n_val = (n / 10).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut seed::rng(seed::mix(seed_value, 2)));
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut train_set = TrainSet::default();
    for &i in train_idx {
        train_set.push(
            meta_inputs(&examples[i].meta),
            examples[i].transformed_label.clone(),
        );
    }
    let mut val_set = TrainSet::default();
    for &i in val_idx {
        val_set.push(
            meta_inputs(&examples[i].meta),
            examples[i].transformed_label.clone(),
        );
    }

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed_value;
    train_cfg.batch_size = train_cfg.batch_size.min(train_set.len());
    let mut trainer = Trainer::new(&spec.net, &train_cfg, train_set.len())?;
    let mut train_loss = Vec::with_capacity(train_cfg.epochs);
    let mut val_loss = Vec::with_capacity(train_cfg.epochs);
    for _ in 0..train_cfg.epochs {
        let loss = match observer.as_deref_mut() {
            Some(obs) => trainer.step_epoch_observed(&train_set, obs)?,
            None => trainer.step_epoch(&train_set)?,
        };
        train_loss.push(loss);
        val_loss.push(mse_loss(&spec.net, &trainer.params, &val_set)?);
    }

    Ok(CoreNetTraining {
        model: CoreNetModel {
            spec,
            params: trainer.params,
            hyper_specs: hyper_specs.to_vec(),
            encoder_hash: first.encoder_hash,
        },
        train_loss,
        val_loss,
    })
}

/// An untrained model with seeded random parameters (the blank-control
/// reference).
pub fn untrained_core_net(
    shape: &[(usize, usize)],
    hyper_specs: &[HyperparamSpec],
    cfg: &CoreNetConfig,
    encoder_hash: u64,
    seed_value: u64,
) -> Result<CoreNetModel> {
    let spec = build_core_net(shape, hyper_specs, cfg)?;
    let params = crate::nn::init_params(&spec.net, seed_value)?;
    Ok(CoreNetModel {
        spec,
        params,
        hyper_specs: hyper_specs.to_vec(),
        encoder_hash,
    })
}

/// Raw head outputs (transformed label space) for an encoding.
pub fn predict_raw(model: &CoreNetModel, meta: &EncodedMeta) -> Result<Vec<f64>> {
    check_meta(&model.spec.meta_shape, model.encoder_hash, meta)?;
    forward(&model.spec.net, &model.params, &meta_inputs(meta))
}

/// Predict an in-bounds hyperparameter vector for an encoding: inference
/// forward pass, then the inverse label transform (clamping, log10 undo,
/// integer rounding).
pub fn predict(model: &CoreNetModel, meta: &EncodedMeta) -> Result<HyperparamVector> {
    let z = predict_raw(model, meta)?;
    Ok(inverse_transform(&z, &model.hyper_specs))
}
