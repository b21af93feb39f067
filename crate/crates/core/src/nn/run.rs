//! Forward and backward passes over a planned network.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::{plan, LayerSpec, Loss, NetPlan, NetworkParams, NetworkSpec, Station};

/// Per-station values recorded during a forward pass, enough to run the
/// matching backward pass.
enum Recorded {
    /// Layer input (dense and conv need it for weight gradients).
    Input(Tensor),
    /// Activation output (derivatives are recoverable from the output).
    Output(Vec<f64>),
    /// Dropout keep mask, already scaled by `1 / (1 - rate)`.
    Mask(Vec<f64>),
    None,
}

pub(crate) struct Cache {
    records: Vec<Recorded>,
}

impl Cache {
    pub(crate) fn empty() -> Self {
        Cache {
            records: Vec::new(),
        }
    }
}

fn conv_padding(in_dim: usize, out_dim: usize, kernel: usize, stride: usize) -> usize {
    // Zero padding that realizes out = ceil(in / stride); the start-side
    // share is the floor half (padding is heavier at the end when odd).
    let total = ((out_dim - 1) * stride + kernel).saturating_sub(in_dim);
    total / 2
}

fn conv_forward(
    input: &Tensor,
    out_shape: Shape,
    kernel: &[f64],
    bias: &[f64],
    kh: usize,
    kw: usize,
    stride: usize,
) -> Tensor {
    let (h, w, cin) = match input.shape {
        Shape::Grid { h, w, c } => (h, w, c),
        Shape::Flat(_) => unreachable!("conv input is checked by plan"),
    };
    let (oh, ow, cout) = match out_shape {
        Shape::Grid { h, w, c } => (h, w, c),
        Shape::Flat(_) => unreachable!(),
    };
    let pad_y = conv_padding(h, oh, kh, stride);
    let pad_x = conv_padding(w, ow, kw, stride);

    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = bias[co];
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_y as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let x = (ox * stride + kx) as isize - pad_x as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let base_in = ((y as usize) * w + x as usize) * cin;
                        let base_k = ((ky * kw + kx) * cin) * cout;
                        for ci in 0..cin {
                            acc += input.data[base_in + ci] * kernel[base_k + ci * cout + co];
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    Tensor {
        shape: out_shape,
        data: out,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &Tensor,
    out_shape: Shape,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    stride: usize,
    upstream: &[f64],
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
) -> Tensor {
    let (h, w, cin) = match input.shape {
        Shape::Grid { h, w, c } => (h, w, c),
        Shape::Flat(_) => unreachable!(),
    };
    let (oh, ow, cout) = match out_shape {
        Shape::Grid { h, w, c } => (h, w, c),
        Shape::Flat(_) => unreachable!(),
    };
    let pad_y = conv_padding(h, oh, kh, stride);
    let pad_x = conv_padding(w, ow, kw, stride);

    let mut grad_in = vec![0.0; input.data.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let g = upstream[(oy * ow + ox) * cout + co];
                if g == 0.0 {
                    continue;
                }
                grad_bias[co] += g;
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_y as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let x = (ox * stride + kx) as isize - pad_x as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let base_in = ((y as usize) * w + x as usize) * cin;
                        let base_k = ((ky * kw + kx) * cin) * cout;
                        for ci in 0..cin {
                            grad_kernel[base_k + ci * cout + co] += g * input.data[base_in + ci];
                            grad_in[base_in + ci] += g * kernel[base_k + ci * cout + co];
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: input.shape,
        data: grad_in,
    }
}

fn station_forward(
    st: &Station,
    station_idx: usize,
    params: &NetworkParams,
    input: Tensor,
    dropout_rng: Option<&mut ChaCha8Rng>,
    record: Option<&mut Recorded>,
) -> Result<Tensor> {
    if input.shape != st.in_shape {
        return Err(Error::ShapeMismatch {
            layer: station_idx,
            expected: st.in_shape.describe(),
            got: input.shape.describe(),
        });
    }
    let out = match st.layer {
        LayerSpec::Dense { in_dim, out_dim } => {
            let lp = &params.layers[st.param.expect("dense has params")];
            let mut out = vec![0.0; out_dim];
            for (o, out_v) in out.iter_mut().enumerate() {
                let row = &lp.weight[o * in_dim..(o + 1) * in_dim];
                let mut acc = lp.bias[o];
                for (wv, xv) in row.iter().zip(&input.data) {
                    acc += wv * xv;
                }
                *out_v = acc;
            }
            if let Some(r) = record {
                *r = Recorded::Input(input);
            }
            Tensor::flat(out)
        }
        LayerSpec::Conv2d {
            kernel_h,
            kernel_w,
            stride,
            ..
        } => {
            let lp = &params.layers[st.param.expect("conv has params")];
            let out = conv_forward(
                &input,
                st.out_shape,
                &lp.weight,
                &lp.bias,
                kernel_h,
                kernel_w,
                stride,
            );
            if let Some(r) = record {
                *r = Recorded::Input(input);
            }
            out
        }
        LayerSpec::Flatten => Tensor {
            shape: st.out_shape,
            data: input.data,
        },
        LayerSpec::Reshape { .. } => Tensor {
            shape: st.out_shape,
            data: input.data,
        },
        LayerSpec::Activation(act) => {
            let data: Vec<f64> = input.data.iter().map(|&x| act.apply(x)).collect();
            if let Some(r) = record {
                *r = Recorded::Output(data.clone());
            }
            Tensor {
                shape: st.out_shape,
                data,
            }
        }
        LayerSpec::Dropout { rate } => match dropout_rng {
            Some(rng) => {
                let keep = 1.0 - rate;
                let mask: Vec<f64> = (0..input.data.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let data = input
                    .data
                    .iter()
                    .zip(&mask)
                    .map(|(x, m)| x * m)
                    .collect();
                if let Some(r) = record {
                    *r = Recorded::Mask(mask);
                }
                Tensor {
                    shape: st.out_shape,
                    data,
                }
            }
            // Inference: identity.
            None => input,
        },
        LayerSpec::Upsample2d { factor } => {
            let (h, w, c) = match st.in_shape {
                Shape::Grid { h, w, c } => (h, w, c),
                Shape::Flat(_) => unreachable!(),
            };
            let (oh, ow) = (h * factor, w * factor);
            let mut data = vec![0.0; oh * ow * c];
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = ((oy / factor) * w + ox / factor) * c;
                    let dst = (oy * ow + ox) * c;
                    data[dst..dst + c].copy_from_slice(&input.data[src..src + c]);
                }
            }
            Tensor {
                shape: st.out_shape,
                data,
            }
        }
    };
    Ok(out)
}

fn station_backward(
    st: &Station,
    params: &NetworkParams,
    grads: &mut NetworkParams,
    recorded: &Recorded,
    upstream: Tensor,
) -> Tensor {
    match st.layer {
        LayerSpec::Dense { in_dim, out_dim } => {
            let pidx = st.param.expect("dense has params");
            let lp = &params.layers[pidx];
            let input = match recorded {
                Recorded::Input(t) => t,
                _ => unreachable!("dense records its input"),
            };
            let mut grad_in = vec![0.0; in_dim];
            {
                let gl = &mut grads.layers[pidx];
                for o in 0..out_dim {
                    let g = upstream.data[o];
                    gl.bias[o] += g;
                    let row = &mut gl.weight[o * in_dim..(o + 1) * in_dim];
                    let wrow = &lp.weight[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        row[i] += g * input.data[i];
                        grad_in[i] += g * wrow[i];
                    }
                }
            }
            Tensor {
                shape: st.in_shape,
                data: grad_in,
            }
        }
        LayerSpec::Conv2d {
            kernel_h,
            kernel_w,
            stride,
            ..
        } => {
            let pidx = st.param.expect("conv has params");
            let input = match recorded {
                Recorded::Input(t) => t,
                _ => unreachable!("conv records its input"),
            };
            // Split borrow: params are read, grads are written.
            let (kernel_ptr, gl) = (&params.layers[pidx].weight, &mut grads.layers[pidx]);
            conv_backward(
                input,
                st.out_shape,
                kernel_ptr,
                kernel_h,
                kernel_w,
                stride,
                &upstream.data,
                &mut gl.weight,
                &mut gl.bias,
            )
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => Tensor {
            shape: st.in_shape,
            data: upstream.data,
        },
        LayerSpec::Activation(act) => {
            let out = match recorded {
                Recorded::Output(o) => o,
                _ => unreachable!("activation records its output"),
            };
            let data = upstream
                .data
                .iter()
                .zip(out)
                .map(|(g, &y)| g * act.grad_from_output(y))
                .collect();
            Tensor {
                shape: st.in_shape,
                data,
            }
        }
        LayerSpec::Dropout { .. } => match recorded {
            Recorded::Mask(mask) => Tensor {
                shape: st.in_shape,
                data: upstream.data.iter().zip(mask).map(|(g, m)| g * m).collect(),
            },
            // Inference-mode dropout contributed identity.
            _ => upstream,
        },
        LayerSpec::Upsample2d { factor } => {
            let (h, w, c) = match st.in_shape {
                Shape::Grid { h, w, c } => (h, w, c),
                Shape::Flat(_) => unreachable!(),
            };
            let ow = w * factor;
            let mut data = vec![0.0; h * w * c];
            for (pos, g) in upstream.data.iter().enumerate() {
                let ch = pos % c;
                let cell = pos / c;
                let (oy, ox) = (cell / ow, cell % ow);
                data[((oy / factor) * w + ox / factor) * c + ch] += g;
            }
            Tensor {
                shape: st.in_shape,
                data,
            }
        }
    }
}

/// Run the network forward. `dropout_rng` enables training-mode dropout;
/// `cache` (when present) records what backward needs.
pub(crate) fn forward_inner(
    plan: &NetPlan,
    params: &NetworkParams,
    inputs: &[Tensor],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    mut cache: Option<&mut Cache>,
) -> Result<Vec<f64>> {
    if inputs.len() != plan.branch_ranges.len() {
        return Err(Error::InvalidSpec(alloc::format!(
            "expected {} inputs, got {}",
            plan.branch_ranges.len(),
            inputs.len()
        )));
    }
    if params.layers.len() != plan.params.len() {
        return Err(Error::InvalidSpec(alloc::format!(
            "expected {} parameter blocks, got {}",
            plan.params.len(),
            params.layers.len()
        )));
    }
    if let Some(c) = cache.as_deref_mut() {
        c.records.clear();
        c.records
            .extend((0..plan.stations.len()).map(|_| Recorded::None));
    }

    let run_range = |range: core::ops::Range<usize>,
                         start: Tensor,
                         dropout_rng: &mut Option<&mut ChaCha8Rng>,
                         cache: &mut Option<&mut Cache>|
     -> Result<Tensor> {
        let mut cur = start;
        for idx in range {
            let st = &plan.stations[idx];
            let rec = cache.as_deref_mut().map(|c| &mut c.records[idx]);
            cur = station_forward(st, idx, params, cur, dropout_rng.as_deref_mut(), rec)?;
        }
        Ok(cur)
    };

    // Branches, joined by concatenation.
    let mut concat = Vec::with_capacity(plan.concat_width);
    for (i, range) in plan.branch_ranges.iter().enumerate() {
        let out = run_range(range.clone(), inputs[i].clone(), &mut dropout_rng, &mut cache)?;
        concat.extend_from_slice(&out.data);
    }

    let trunk_out = run_range(
        plan.trunk_range.clone(),
        Tensor::flat(concat),
        &mut dropout_rng,
        &mut cache,
    )?;

    if plan.head_ranges.is_empty() {
        return Ok(trunk_out.data);
    }

    // Heads: split the trunk output by declared widths, concatenate outputs.
    let mut out = Vec::with_capacity(plan.output_width);
    let mut offset = 0;
    for (i, range) in plan.head_ranges.iter().enumerate() {
        let width = plan.head_in_widths[i];
        let slice = Tensor::flat(trunk_out.data[offset..offset + width].to_vec());
        offset += width;
        let head_out = run_range(range.clone(), slice, &mut dropout_rng, &mut cache)?;
        out.extend_from_slice(&head_out.data);
    }
    Ok(out)
}

/// Backward pass matching the forward recorded in `cache`; returns gradients
/// in a `NetworkParams`-shaped container.
pub(crate) fn backward_inner(
    plan: &NetPlan,
    params: &NetworkParams,
    cache: &Cache,
    output_grad: Vec<f64>,
    grads: &mut NetworkParams,
) {
    let run_range_back = |range: core::ops::Range<usize>,
                          upstream: Tensor,
                          grads: &mut NetworkParams|
     -> Tensor {
        let mut cur = upstream;
        for idx in range.rev() {
            let st = &plan.stations[idx];
            cur = station_backward(st, params, grads, &cache.records[idx], cur);
        }
        cur
    };

    // Heads (reverse of the output concatenation).
    let trunk_grad = if plan.head_ranges.is_empty() {
        output_grad
    } else {
        let mut trunk_grad = vec![0.0; plan.head_in_widths.iter().sum::<usize>()];
        let mut out_off = 0;
        let mut in_off = 0;
        for (i, range) in plan.head_ranges.iter().enumerate() {
            let width = plan.head_out_widths[i];
            let upstream = Tensor::flat(output_grad[out_off..out_off + width].to_vec());
            out_off += width;
            let g = run_range_back(range.clone(), upstream, grads);
            trunk_grad[in_off..in_off + plan.head_in_widths[i]].copy_from_slice(&g.data);
            in_off += plan.head_in_widths[i];
        }
        trunk_grad
    };

    let concat_grad = run_range_back(plan.trunk_range.clone(), Tensor::flat(trunk_grad), grads);

    // Branches (reverse of the concatenation split).
    let mut offset = 0;
    for (i, range) in plan.branch_ranges.iter().enumerate() {
        let width = plan.branch_widths[i];
        let upstream = Tensor::flat(concat_grad.data[offset..offset + width].to_vec());
        offset += width;
        let _input_grad = run_range_back(range.clone(), upstream, grads);
    }
}

/// Inference-mode forward pass: dropout disabled, deterministic and pure.
pub fn forward(spec: &NetworkSpec, params: &NetworkParams, inputs: &[Tensor]) -> Result<Vec<f64>> {
    let plan = plan(spec)?;
    forward_inner(&plan, params, inputs, None, None)
}

/// Training-mode forward pass: dropout layers draw their masks from `rng`.
pub fn forward_train(
    spec: &NetworkSpec,
    params: &NetworkParams,
    inputs: &[Tensor],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let plan = plan(spec)?;
    forward_inner(&plan, params, inputs, Some(rng), None)
}

/// Gradients of the batch-mean loss for every trainable parameter.
///
/// `batch` pairs one input list per sample with its flat target. Dropout is
/// inactive here (gradients of the inference function); [`train`] drives the
/// dropout-aware path internally.
///
/// [`train`]: super::train
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    batch: (&[Vec<Tensor>], &[Vec<f64>]),
    loss: Loss,
) -> Result<NetworkParams> {
    let plan = plan(spec)?;
    let (inputs, targets) = batch;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::EmptyInput("backward needs a nonempty batch".into()));
    }
    let mut grads = NetworkParams::zeros_like(&plan.params);
    let mut cache = Cache {
        records: Vec::new(),
    };
    let scale = 1.0 / inputs.len() as f64;
    for (sample, (ins, target)) in inputs.iter().zip(targets).enumerate() {
        let out = forward_inner(&plan, params, ins, None, Some(&mut cache))?;
        let Loss::Mse = loss;
        let d = out.len() as f64;
        let mut sample_loss = 0.0;
        let mut grad = Vec::with_capacity(out.len());
        for (y, t) in out.iter().zip(target) {
            let r = y - t;
            sample_loss += r * r;
            grad.push(2.0 * r / d * scale);
        }
        if !sample_loss.is_finite() {
            return Err(Error::NonFiniteLoss { sample });
        }
        backward_inner(&plan, params, &cache, grad, &mut grads);
    }
    Ok(grads)
}
