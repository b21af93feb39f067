//! Dataset encoders: a dataset becomes a fixed-shape stack of matrices by
//! training an autoencoder jointly on attributes and one-hot labels, then
//! exporting the encoder-side weights with each layer's bias appended as a
//! final column. Those matrices are the dataset's meta-features and the meta
//! network's input.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{ImageDataset, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::{
    train, Activation, HeadSpec, LayerSpec, NetworkParams, NetworkSpec, TrainConfig, TrainSet,
};
use crate::stable_hash::{hash_of, StableHash, StableHasher};
use crate::tensor::{Shape, Tensor};

/// One convolution stage of the image encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

/// Encoder topology family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum EncoderKind {
    /// Dense stack autoencoder over `features ++ one-hot(label)`. Empty
    /// `hidden` means one hidden layer of `ceil(input / 2)` units.
    Table { hidden: Vec<usize> },
    /// Convolutional autoencoder; the flattened image code is joined with
    /// the one-hot label before the dense bottleneck, and the decoder
    /// separates them again.
    Image { conv: Vec<ConvStage> },
}

/// Full encoder description. One pipeline run must use a single spec for
/// every dataset so that all encodings share one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub bottleneck: usize,
    pub train: TrainConfig,
}

impl EncoderSpec {
    /// Structural fingerprint; encodings carry it so downstream consumers
    /// can reject mismatched inputs.
    pub fn fingerprint(&self) -> u64 {
        hash_of(self)
    }
}

impl StableHash for EncoderSpec {
    fn stable_hash(&self, h: &mut StableHasher) {
        match &self.kind {
            EncoderKind::Table { hidden } => {
                h.write_u8(0);
                h.write_usize(hidden.len());
                for &w in hidden {
                    h.write_usize(w);
                }
            }
            EncoderKind::Image { conv } => {
                h.write_u8(1);
                h.write_usize(conv.len());
                for s in conv {
                    h.write_usize(s.kernel);
                    h.write_usize(s.stride);
                    h.write_usize(s.channels);
                }
            }
        }
        h.write_usize(self.bottleneck);
        self.train.stable_hash(h);
    }
}

/// One exported encoder layer: `rows x cols` with `cols = in_dim + 1`, the
/// bias occupying the final column. Convolution kernels are flattened one
/// output channel per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MetaMatrix {
    /// Split the bias column back off: `(weights, bias)` with `weights`
    /// row-major `rows x (cols - 1)`.
    pub fn split_bias(&self) -> (Vec<f64>, Vec<f64>) {
        let w_cols = self.cols - 1;
        let mut weights = Vec::with_capacity(self.rows * w_cols);
        let mut bias = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            weights.extend_from_slice(&row[..w_cols]);
            bias.push(row[w_cols]);
        }
        (weights, bias)
    }

    pub fn as_tensor(&self) -> Tensor {
        Tensor {
            shape: Shape::Grid {
                h: self.rows,
                w: self.cols,
                c: 1,
            },
            data: self.data.clone(),
        }
    }
}

/// A dataset's meta-features: the encoder-layer matrices plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMeta {
    pub matrices: Vec<MetaMatrix>,
    pub dataset_id: String,
    pub encoder_hash: u64,
    pub final_loss: f64,
}

impl EncodedMeta {
    pub fn shape(&self) -> Vec<(usize, usize)> {
        self.matrices.iter().map(|m| (m.rows, m.cols)).collect()
    }
}

/// An autoencoder network together with the count of leading parametric
/// layers that form the encoder half.
#[derive(Debug, Clone)]
pub struct EncoderNetwork {
    pub net: NetworkSpec,
    pub encoder_layers: usize,
}

/// Matrix shapes an encoder will export, as a pure function of the spec and
/// the pipeline-wide data dimensions (never of row counts).
pub fn table_meta_shape(
    spec: &EncoderSpec,
    n_features: usize,
    n_classes: usize,
) -> Result<Vec<(usize, usize)>> {
    let widths = table_widths(spec, n_features, n_classes)?;
    Ok(widths
        .windows(2)
        .map(|w| (w[1], w[0] + 1))
        .collect())
}

/// Encoder layer widths, input first, bottleneck last.
fn table_widths(spec: &EncoderSpec, n_features: usize, n_classes: usize) -> Result<Vec<usize>> {
    let hidden = match &spec.kind {
        EncoderKind::Table { hidden } => hidden,
        EncoderKind::Image { .. } => {
            return Err(Error::InvalidSpec(
                "table encoder requested from an image spec".into(),
            ))
        }
    };
    if n_classes == 0 {
        return Err(Error::InvalidSpec("n_classes must be >= 1".into()));
    }
    if n_features == 0 {
        return Err(Error::InvalidSpec("n_features must be >= 1".into()));
    }
    let input = n_features + n_classes;
    if spec.bottleneck >= input {
        return Err(Error::InvalidSpec(alloc::format!(
            "bottleneck {} not below input width {input}",
            spec.bottleneck
        )));
    }
    if spec.bottleneck == 0 {
        return Err(Error::InvalidSpec("bottleneck must be >= 1".into()));
    }
    let mut widths = vec![input];
    if hidden.is_empty() {
        widths.push(input.div_ceil(2));
    } else {
        widths.extend_from_slice(hidden);
    }
    widths.push(spec.bottleneck);
    Ok(widths)
}

/// Symmetric dense autoencoder over the joint `features ++ one-hot` vector:
/// tanh on every encoder layer, mirrored decoder with a linear output.
pub fn build_table_encoder(
    spec: &EncoderSpec,
    n_features: usize,
    n_classes: usize,
) -> Result<EncoderNetwork> {
    let widths = table_widths(spec, n_features, n_classes)?;
    let input = widths[0];
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        layers.push(LayerSpec::Dense {
            in_dim: w[0],
            out_dim: w[1],
        });
        layers.push(LayerSpec::Activation(Activation::Tanh));
    }
    let encoder_layers = widths.len() - 1;
    for w in widths.windows(2).rev() {
        layers.push(LayerSpec::Dense {
            in_dim: w[1],
            out_dim: w[0],
        });
        if w[0] != input {
            layers.push(LayerSpec::Activation(Activation::Tanh));
        }
    }
    Ok(EncoderNetwork {
        net: NetworkSpec::sequential(Shape::Flat(input), layers),
        encoder_layers,
    })
}

/// Matrix shapes the image encoder will export.
pub fn image_meta_shape(
    spec: &EncoderSpec,
    h: usize,
    w: usize,
    c: usize,
    n_classes: usize,
) -> Result<Vec<(usize, usize)>> {
    let net = build_image_encoder(spec, h, w, c, n_classes)?;
    let shapes = net.net.param_shapes()?;
    Ok(shapes[..net.encoder_layers]
        .iter()
        .map(|p| match *p {
            crate::nn::ParamShape::Dense { in_dim, out_dim } => (out_dim, in_dim + 1),
            crate::nn::ParamShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => (out_channels, kernel_h * kernel_w * in_channels + 1),
        })
        .collect())
}

/// Convolutional autoencoder: conv stack, flatten, join with the one-hot
/// label, dense bottleneck; the decoder splits image code from label code,
/// restores the conv shape and upsamples back to the input resolution.
pub fn build_image_encoder(
    spec: &EncoderSpec,
    h: usize,
    w: usize,
    c: usize,
    n_classes: usize,
) -> Result<EncoderNetwork> {
    let conv = match &spec.kind {
        EncoderKind::Image { conv } => conv,
        EncoderKind::Table { .. } => {
            return Err(Error::InvalidSpec(
                "image encoder requested from a table spec".into(),
            ))
        }
    };
    if n_classes == 0 {
        return Err(Error::InvalidSpec("n_classes must be >= 1".into()));
    }
    if conv.is_empty() {
        return Err(Error::InvalidSpec(
            "image encoder needs at least one conv stage".into(),
        ));
    }

    // Encoder image branch.
    let mut branch = Vec::new();
    let (mut ch, mut hh, mut ww) = (c, h, w);
    for stage in conv {
        if hh % stage.stride != 0 || ww % stage.stride != 0 {
            return Err(Error::InvalidSpec(alloc::format!(
                "spatial dims {hh}x{ww} not divisible by stride {}",
                stage.stride
            )));
        }
        branch.push(LayerSpec::Conv2d {
            kernel_h: stage.kernel,
            kernel_w: stage.kernel,
            in_channels: ch,
            out_channels: stage.channels,
            stride: stage.stride,
        });
        branch.push(LayerSpec::Activation(Activation::Relu));
        ch = stage.channels;
        hh /= stage.stride;
        ww /= stage.stride;
    }
    branch.push(LayerSpec::Flatten);
    let flat = hh * ww * ch;

    let joint = flat + n_classes;
    if spec.bottleneck >= joint {
        return Err(Error::InvalidSpec(alloc::format!(
            "bottleneck {} not below joint code width {joint}",
            spec.bottleneck
        )));
    }

    // Trunk: join, compress, re-expand; the expanding layer separates image
    // code from label code for the two decoder heads.
    let trunk = vec![
        LayerSpec::Dense {
            in_dim: joint,
            out_dim: spec.bottleneck,
        },
        LayerSpec::Activation(Activation::Tanh),
        LayerSpec::Dense {
            in_dim: spec.bottleneck,
            out_dim: joint,
        },
    ];

    // Image head: restore the conv grid, then upsample + conv back out.
    let mut image_head = vec![LayerSpec::Reshape {
        h: hh,
        w: ww,
        c: ch,
    }];
    let mut cur_c = ch;
    for (i, stage) in conv.iter().enumerate().rev() {
        let out_c = if i == 0 { c } else { conv[i - 1].channels };
        image_head.push(LayerSpec::Upsample2d {
            factor: stage.stride,
        });
        image_head.push(LayerSpec::Conv2d {
            kernel_h: stage.kernel,
            kernel_w: stage.kernel,
            in_channels: cur_c,
            out_channels: out_c,
            stride: 1,
        });
        if i != 0 {
            image_head.push(LayerSpec::Activation(Activation::Relu));
        }
        cur_c = out_c;
    }
    image_head.push(LayerSpec::Flatten);

    let net = NetworkSpec {
        input_shapes: vec![Shape::Grid { h, w, c }, Shape::Flat(n_classes)],
        branches: vec![branch, vec![]],
        trunk,
        heads: vec![
            HeadSpec {
                in_width: flat,
                layers: image_head,
            },
            HeadSpec {
                in_width: n_classes,
                layers: vec![],
            },
        ],
    };
    Ok(EncoderNetwork {
        net,
        // Conv stages plus the bottleneck dense layer.
        encoder_layers: conv.len() + 1,
    })
}

fn one_hot(label: usize, n_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_classes];
    v[label] = 1.0;
    v
}

/// Export the first `encoder_layers` parameter blocks as bias-concatenated
/// matrices.
fn export_matrices(
    net: &NetworkSpec,
    params: &NetworkParams,
    encoder_layers: usize,
) -> Result<Vec<MetaMatrix>> {
    let shapes = net.param_shapes()?;
    let mut out = Vec::with_capacity(encoder_layers);
    for (shape, lp) in shapes.iter().zip(&params.layers).take(encoder_layers) {
        let (rows, in_dim) = match *shape {
            crate::nn::ParamShape::Dense { in_dim, out_dim } => (out_dim, in_dim),
            crate::nn::ParamShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => (out_channels, kernel_h * kernel_w * in_channels),
        };
        let cols = in_dim + 1;
        let mut data = Vec::with_capacity(rows * cols);
        match *shape {
            crate::nn::ParamShape::Dense { .. } => {
                for r in 0..rows {
                    data.extend_from_slice(&lp.weight[r * in_dim..(r + 1) * in_dim]);
                    data.push(lp.bias[r]);
                }
            }
            crate::nn::ParamShape::Conv { out_channels, .. } => {
                // Kernel layout is [ky][kx][c_in][c_out]; one row per output
                // channel.
                for co in 0..out_channels {
                    for pos in 0..in_dim {
                        data.push(lp.weight[pos * out_channels + co]);
                    }
                    data.push(lp.bias[co]);
                }
            }
        }
        out.push(MetaMatrix { rows, cols, data });
    }
    Ok(out)
}

/// Train the table autoencoder on a dataset and export the encoder matrices.
/// Deterministic for a given seed; the same `(spec, seed)` policy must be
/// applied to every dataset in a run.
pub fn encode_tabular(
    d: &TabularDataset,
    spec: &EncoderSpec,
    dataset_id: &str,
    seed: u64,
) -> Result<EncodedMeta> {
    if d.n_rows() == 0 {
        return Err(Error::EmptyInput("cannot encode an empty dataset".into()));
    }
    let enc = build_table_encoder(spec, d.n_features, d.n_classes)?;
    let mut data = TrainSet::default();
    for i in 0..d.n_rows() {
        let mut joint = d.row(i).to_vec();
        joint.extend(one_hot(d.labels[i], d.n_classes));
        data.push(vec![Tensor::flat(joint.clone())], joint);
    }
    finish_encoding(&enc, spec, &data, dataset_id, seed)
}

/// Train the image autoencoder on a dataset and export the encoder matrices.
pub fn encode_image(
    d: &ImageDataset,
    spec: &EncoderSpec,
    dataset_id: &str,
    seed: u64,
) -> Result<EncodedMeta> {
    if d.n_rows() == 0 {
        return Err(Error::EmptyInput("cannot encode an empty dataset".into()));
    }
    let enc = build_image_encoder(spec, d.h, d.w, d.c, d.n_classes)?;
    let mut data = TrainSet::default();
    for i in 0..d.n_rows() {
        let pixels = d.image(i).to_vec();
        let label = one_hot(d.labels[i], d.n_classes);
        let mut target = pixels.clone();
        target.extend_from_slice(&label);
        data.push(
            vec![
                Tensor {
                    shape: Shape::Grid {
                        h: d.h,
                        w: d.w,
                        c: d.c,
                    },
                    data: pixels,
                },
                Tensor::flat(label),
            ],
            target,
        );
    }
    finish_encoding(&enc, spec, &data, dataset_id, seed)
}

fn finish_encoding(
    enc: &EncoderNetwork,
    spec: &EncoderSpec,
    data: &TrainSet,
    dataset_id: &str,
    seed: u64,
) -> Result<EncodedMeta> {
    let mut cfg = spec.train.clone();
    cfg.seed = seed;
    cfg.batch_size = cfg.batch_size.min(data.len());
    let trained = train(&enc.net, &cfg, data)?;
    let final_loss = trained
        .loss_history
        .last()
        .copied()
        .map_or_else(|| crate::nn::mse_loss(&enc.net, &trained.params, data), Ok)?;
    Ok(EncodedMeta {
        matrices: export_matrices(&enc.net, &trained.params, enc.encoder_layers)?,
        dataset_id: dataset_id.into(),
        encoder_hash: spec.fingerprint(),
        final_loss,
    })
}
