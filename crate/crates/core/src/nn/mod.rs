//! Feedforward network engine: dense and 2-D convolution layers, flatten /
//! reshape / upsample plumbing, activations, dropout, backpropagation with
//! optional global-norm gradient clipping, and seeded mini-batch SGD.
//!
//! A [`NetworkSpec`] is a small fixed graph: one sequential stack per input
//! (`branches`), whose flat outputs are concatenated and fed through a
//! sequential `trunk`; optionally the trunk output is split by width into
//! per-`head` stacks whose flat outputs are concatenated again into the
//! single network output. Plain MLPs use one branch, an empty head list.

mod run;
mod train;

pub use run::{backward, forward, forward_train};
pub use train::{clip_gradients, mse_loss, train, StepInfo, TrainSet, Trained, Trainer};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::stable_hash::{StableHash, StableHasher};
use crate::tensor::Shape;

/// Pointwise nonlinearity. `Elu` uses alpha = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Elu,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed in terms of the layer *output* `y`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Elu => {
                if y > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// One layer of a sequential stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    /// 2-D convolution with zero ("same") padding; spatial output dims are
    /// `ceil(in / stride)`.
    Conv2d {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    Flatten,
    Activation(Activation),
    /// Inverted dropout: active only during training, identity in inference.
    Dropout {
        rate: f64,
    },
    /// Nearest-neighbour upsampling by an integer factor.
    Upsample2d {
        factor: usize,
    },
    /// Reinterpret a flat vector as an `h x w x c` grid.
    Reshape {
        h: usize,
        w: usize,
        c: usize,
    },
}

/// One output head: consumes a `in_width`-wide slice of the trunk output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub in_width: usize,
    pub layers: Vec<LayerSpec>,
}

/// A fixed multi-branch network graph; see the module docs for the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shapes: Vec<Shape>,
    /// One sequential stack per input; each must end with a flat shape.
    pub branches: Vec<Vec<LayerSpec>>,
    /// Runs on the concatenation of all branch outputs.
    pub trunk: Vec<LayerSpec>,
    /// When non-empty, splits the trunk output by `in_width`; the flat head
    /// outputs are concatenated into the network output.
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    /// Single-input, single-stack network.
    pub fn sequential(input: Shape, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_shapes: alloc::vec![input],
            branches: alloc::vec![layers],
            trunk: Vec::new(),
            heads: Vec::new(),
        }
    }

    /// Shape of the network output (always flat).
    pub fn output_width(&self) -> Result<usize> {
        Ok(plan(self)?.output_width)
    }

    /// Shapes of every trainable parameter block, in traversal order
    /// (branches, then trunk, then heads).
    pub fn param_shapes(&self) -> Result<Vec<ParamShape>> {
        Ok(plan(self)?.params)
    }
}

/// Dimensions of one trainable layer's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamShape {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
    },
}

impl ParamShape {
    pub fn weight_len(&self) -> usize {
        match *self {
            ParamShape::Dense { in_dim, out_dim } => in_dim * out_dim,
            ParamShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => kernel_h * kernel_w * in_channels * out_channels,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            ParamShape::Dense { out_dim, .. } => out_dim,
            ParamShape::Conv { out_channels, .. } => out_channels,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            ParamShape::Dense { in_dim, .. } => in_dim,
            ParamShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                ..
            } => kernel_h * kernel_w * in_channels,
        }
    }
}

/// Parameters of one trainable layer.
///
/// Dense weights are row-major `out_dim x in_dim`; convolution kernels are
/// stored `[ky][kx][c_in][c_out]` with `c_out` innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable parameters of a network, aligned with
/// [`NetworkSpec::param_shapes`]. The same container carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros_like(shapes: &[ParamShape]) -> Self {
        Self {
            layers: shapes
                .iter()
                .map(|s| LayerParams {
                    weight: alloc::vec![0.0; s.weight_len()],
                    bias: alloc::vec![0.0; s.bias_len()],
                })
                .collect(),
        }
    }

    pub fn count_scalars(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Global L2 norm over every scalar.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for l in &self.layers {
            for v in l.weight.iter().chain(&l.bias) {
                sq += v * v;
            }
        }
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(&mut l.bias) {
                *v *= factor;
            }
        }
    }

    /// `self += alpha * other` (shapes must match).
    pub fn add_scaled(&mut self, other: &NetworkParams, alpha: f64) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += alpha * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += alpha * y;
            }
        }
    }
}

/// Loss functions supported by [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
}

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global L2 clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

impl StableHash for TrainConfig {
    fn stable_hash(&self, h: &mut StableHasher) {
        h.write_f64(self.learning_rate);
        h.write_usize(self.epochs);
        h.write_usize(self.batch_size);
        match self.clip_norm {
            Some(c) => {
                h.write_u8(1);
                h.write_f64(c);
            }
            None => h.write_u8(0),
        }
        h.write_u64(self.seed);
        h.write_u8(match self.loss {
            Loss::Mse => 0,
        });
    }
}

// ---------------------------------------------------------------------------
// Shape plan
// ---------------------------------------------------------------------------

/// One layer instance with resolved shapes.
#[derive(Debug, Clone)]
pub(crate) struct Station {
    pub layer: LayerSpec,
    pub in_shape: Shape,
    pub out_shape: Shape,
    /// Index into `NetworkParams.layers` for trainable layers.
    pub param: Option<usize>,
}

/// A validated network with every shape resolved.
#[derive(Debug, Clone)]
pub(crate) struct NetPlan {
    pub stations: Vec<Station>,
    pub branch_ranges: Vec<core::ops::Range<usize>>,
    pub trunk_range: core::ops::Range<usize>,
    pub head_ranges: Vec<core::ops::Range<usize>>,
    pub branch_widths: Vec<usize>,
    pub concat_width: usize,
    pub head_in_widths: Vec<usize>,
    pub head_out_widths: Vec<usize>,
    pub output_width: usize,
    pub params: Vec<ParamShape>,
}

fn layer_out_shape(
    layer: &LayerSpec,
    in_shape: Shape,
    station: usize,
) -> Result<(Shape, Option<ParamShape>)> {
    let mismatch = |expected: String| Error::ShapeMismatch {
        layer: station,
        expected,
        got: in_shape.describe(),
    };
    match *layer {
        LayerSpec::Dense { in_dim, out_dim } => {
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {station}: dense dims must be >= 1"
                )));
            }
            match in_shape {
                Shape::Flat(n) if n == in_dim => Ok((
                    Shape::Flat(out_dim),
                    Some(ParamShape::Dense { in_dim, out_dim }),
                )),
                _ => Err(mismatch(format!("flat({in_dim})"))),
            }
        }
        LayerSpec::Conv2d {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            stride,
        } => {
            if kernel_h == 0 || kernel_w == 0 || in_channels == 0 || out_channels == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {station}: conv dims must be >= 1"
                )));
            }
            if stride == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {station}: conv stride must be >= 1"
                )));
            }
            match in_shape {
                Shape::Grid { h, w, c } if c == in_channels => Ok((
                    Shape::Grid {
                        h: h.div_ceil(stride),
                        w: w.div_ceil(stride),
                        c: out_channels,
                    },
                    Some(ParamShape::Conv {
                        kernel_h,
                        kernel_w,
                        in_channels,
                        out_channels,
                    }),
                )),
                _ => Err(mismatch(format!("grid(_x_x{in_channels})"))),
            }
        }
        LayerSpec::Flatten => Ok((Shape::Flat(in_shape.len()), None)),
        LayerSpec::Activation(_) => Ok((in_shape, None)),
        LayerSpec::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidSpec(format!(
                    "layer {station}: dropout rate {rate} outside [0, 1)"
                )));
            }
            Ok((in_shape, None))
        }
        LayerSpec::Upsample2d { factor } => {
            if factor == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {station}: upsample factor must be >= 1"
                )));
            }
            match in_shape {
                Shape::Grid { h, w, c } => Ok((
                    Shape::Grid {
                        h: h * factor,
                        w: w * factor,
                        c,
                    },
                    None,
                )),
                Shape::Flat(_) => Err(mismatch("grid".into())),
            }
        }
        LayerSpec::Reshape { h, w, c } => {
            if h * w * c != in_shape.len() {
                return Err(mismatch(format!("{} elements", h * w * c)));
            }
            Ok((Shape::Grid { h, w, c }, None))
        }
    }
}

/// Validate a spec and resolve every intermediate shape.
pub(crate) fn plan(spec: &NetworkSpec) -> Result<NetPlan> {
    if spec.input_shapes.is_empty() {
        return Err(Error::InvalidSpec("network needs at least one input".into()));
    }
    if spec.input_shapes.len() != spec.branches.len() {
        return Err(Error::InvalidSpec(format!(
            "{} inputs but {} branches",
            spec.input_shapes.len(),
            spec.branches.len()
        )));
    }

    let mut stations: Vec<Station> = Vec::new();
    let mut params: Vec<ParamShape> = Vec::new();

    let walk = |layers: &[LayerSpec],
                    start_shape: Shape,
                    stations: &mut Vec<Station>,
                    params: &mut Vec<ParamShape>|
     -> Result<(Shape, core::ops::Range<usize>)> {
        let begin = stations.len();
        let mut cur = start_shape;
        for layer in layers {
            let idx = stations.len();
            let (out, pshape) = layer_out_shape(layer, cur, idx)?;
            let param = pshape.map(|p| {
                params.push(p);
                params.len() - 1
            });
            stations.push(Station {
                layer: *layer,
                in_shape: cur,
                out_shape: out,
                param,
            });
            cur = out;
        }
        Ok((cur, begin..stations.len()))
    };

    let mut branch_ranges = Vec::with_capacity(spec.branches.len());
    let mut branch_widths = Vec::with_capacity(spec.branches.len());
    for (i, (layers, &input)) in spec.branches.iter().zip(&spec.input_shapes).enumerate() {
        let (out, range) = walk(layers, input, &mut stations, &mut params)?;
        match out {
            Shape::Flat(n) => branch_widths.push(n),
            Shape::Grid { .. } => {
                return Err(Error::InvalidSpec(format!(
                    "branch {i} must end with a flat shape (add a flatten layer)"
                )))
            }
        }
        branch_ranges.push(range);
    }

    let concat_width: usize = branch_widths.iter().sum();
    let (trunk_out, trunk_range) = walk(
        &spec.trunk,
        Shape::Flat(concat_width),
        &mut stations,
        &mut params,
    )?;
    let trunk_out_width = match trunk_out {
        Shape::Flat(n) => n,
        Shape::Grid { .. } => {
            return Err(Error::InvalidSpec(
                "trunk must end with a flat shape".into(),
            ))
        }
    };

    let mut head_ranges = Vec::with_capacity(spec.heads.len());
    let mut head_in_widths = Vec::with_capacity(spec.heads.len());
    let mut head_out_widths = Vec::with_capacity(spec.heads.len());
    let mut output_width = trunk_out_width;
    if !spec.heads.is_empty() {
        let declared: usize = spec.heads.iter().map(|h| h.in_width).sum();
        if declared != trunk_out_width {
            return Err(Error::InvalidSpec(format!(
                "head input widths sum to {declared}, trunk produces {trunk_out_width}"
            )));
        }
        output_width = 0;
        for (i, head) in spec.heads.iter().enumerate() {
            let (out, range) = walk(
                &head.layers,
                Shape::Flat(head.in_width),
                &mut stations,
                &mut params,
            )?;
            match out {
                Shape::Flat(n) => {
                    output_width += n;
                    head_out_widths.push(n);
                }
                Shape::Grid { .. } => {
                    return Err(Error::InvalidSpec(format!(
                        "head {i} must end with a flat shape (add a flatten layer)"
                    )))
                }
            }
            head_ranges.push(range);
            head_in_widths.push(head.in_width);
        }
    }

    Ok(NetPlan {
        stations,
        branch_ranges,
        trunk_range,
        head_ranges,
        branch_widths,
        concat_width,
        head_in_widths,
        head_out_widths,
        output_width,
        params,
    })
}

/// Seeded parameter initialization: weights uniform in
/// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases zero.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    let plan = plan(spec)?;
    let mut rng = seed::rng(seed);
    let layers = plan
        .params
        .iter()
        .map(|p| {
            let bound = 1.0 / (p.fan_in() as f64).sqrt();
            LayerParams {
                weight: (0..p.weight_len())
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect(),
                bias: alloc::vec![0.0; p.bias_len()],
            }
        })
        .collect();
    Ok(NetworkParams { layers })
}
