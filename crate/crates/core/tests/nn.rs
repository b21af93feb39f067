//! Worked examples and contracts for the network engine.

use paramap_core::nn::{
    backward, clip_gradients, forward, init_params, train, Activation, LayerParams, LayerSpec,
    Loss, NetworkParams, NetworkSpec, TrainConfig, TrainSet,
};
use paramap_core::seed;
use paramap_core::tensor::{Shape, Tensor};
use rand::Rng;

fn dense(in_dim: usize, out_dim: usize) -> LayerSpec {
    LayerSpec::Dense { in_dim, out_dim }
}

#[test]
fn identity_dense_layer_passes_input_through() {
    let spec = NetworkSpec::sequential(Shape::Flat(2), vec![dense(2, 2)]);
    let params = NetworkParams {
        layers: vec![LayerParams {
            weight: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        }],
    };
    let out = forward(&spec, &params, &[Tensor::flat(vec![0.3, -0.7])]).unwrap();
    assert_eq!(out, vec![0.3, -0.7]);
}

#[test]
fn tanh_of_zero_sum_is_zero() {
    let spec = NetworkSpec::sequential(
        Shape::Flat(2),
        vec![dense(2, 1), LayerSpec::Activation(Activation::Tanh)],
    );
    let params = NetworkParams {
        layers: vec![LayerParams {
            weight: vec![1.0, 1.0],
            bias: vec![0.0],
        }],
    };
    let out = forward(&spec, &params, &[Tensor::flat(vec![0.0, 0.0])]).unwrap();
    assert_eq!(out, vec![0.0]);
}

#[test]
fn two_layer_net_matches_straight_line_matrix_oracle() {
    let spec = NetworkSpec::sequential(
        Shape::Flat(3),
        vec![
            dense(3, 4),
            LayerSpec::Activation(Activation::Tanh),
            dense(4, 2),
        ],
    );
    let params = init_params(&spec, 42).unwrap();
    let input = [0.25, -0.4, 0.9];
    let out = forward(&spec, &params, &[Tensor::flat(input.to_vec())]).unwrap();

    // Independent hand-rolled arithmetic over the same parameters.
    let l0 = &params.layers[0];
    let mut hidden = [0.0f64; 4];
    for (o, h) in hidden.iter_mut().enumerate() {
        let mut acc = l0.bias[o];
        for (i, x) in input.iter().enumerate() {
            acc += l0.weight[o * 3 + i] * x;
        }
        *h = acc.tanh();
    }
    let l1 = &params.layers[1];
    for o in 0..2 {
        let mut acc = l1.bias[o];
        for (i, h) in hidden.iter().enumerate() {
            acc += l1.weight[o * 4 + i] * h;
        }
        assert!((out[o] - acc).abs() < 1e-10, "{} vs {acc}", out[o]);
    }
}

#[test]
fn forward_is_pure_and_inference_dropout_is_identity() {
    let with_dropout = NetworkSpec::sequential(
        Shape::Flat(3),
        vec![
            dense(3, 5),
            LayerSpec::Activation(Activation::Elu),
            LayerSpec::Dropout { rate: 0.5 },
            dense(5, 2),
        ],
    );
    let without: NetworkSpec = NetworkSpec::sequential(
        Shape::Flat(3),
        vec![
            dense(3, 5),
            LayerSpec::Activation(Activation::Elu),
            dense(5, 2),
        ],
    );
    let params = init_params(&with_dropout, 3).unwrap();
    let input = [Tensor::flat(vec![1.0, -2.0, 0.5])];
    let a = forward(&with_dropout, &params, &input).unwrap();
    let b = forward(&with_dropout, &params, &input).unwrap();
    assert_eq!(a, b);
    let c = forward(&without, &params, &input).unwrap();
    assert_eq!(a, c);
}

#[test]
fn shape_mismatch_reports_the_offending_layer() {
    let spec = NetworkSpec::sequential(Shape::Flat(3), vec![dense(3, 2)]);
    let params = init_params(&spec, 0).unwrap();
    let err = forward(&spec, &params, &[Tensor::flat(vec![1.0, 2.0])]).unwrap_err();
    match err {
        paramap_core::Error::ShapeMismatch { layer, .. } => assert_eq!(layer, 0),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn concat_then_split_recovers_each_branch() {
    // Two identity branches joined by concatenation: the output is the
    // branch inputs laid side by side, so splitting by widths recovers them.
    let spec = NetworkSpec {
        input_shapes: vec![Shape::Flat(2), Shape::Flat(3)],
        branches: vec![vec![], vec![]],
        trunk: vec![],
        heads: vec![],
    };
    let params = NetworkParams { layers: vec![] };
    let a = vec![1.0, 2.0];
    let b = vec![3.0, 4.0, 5.0];
    let out = forward(
        &spec,
        &params,
        &[Tensor::flat(a.clone()), Tensor::flat(b.clone())],
    )
    .unwrap();
    assert_eq!(out[..2], a[..]);
    assert_eq!(out[2..], b[..]);
}

#[test]
fn zero_residual_batch_gives_zero_gradients() {
    let spec = NetworkSpec::sequential(
        Shape::Flat(2),
        vec![dense(2, 3), LayerSpec::Activation(Activation::Tanh), dense(3, 1)],
    );
    let params = init_params(&spec, 9).unwrap();
    let inputs = vec![vec![Tensor::flat(vec![0.4, -0.2])]];
    let outputs = forward(&spec, &params, &inputs[0]).unwrap();
    let grads = backward(&spec, &params, (&inputs, &[outputs]), Loss::Mse).unwrap();
    for layer in &grads.layers {
        assert!(layer.weight.iter().all(|&g| g == 0.0));
        assert!(layer.bias.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn conv_with_unit_kernel_reduces_to_dense() {
    // A 1x1 convolution over a 1x1 grid is a dense layer with transposed
    // weight layout; gradients must agree exactly.
    let cin = 3;
    let cout = 2;
    let conv_spec = NetworkSpec::sequential(
        Shape::Grid { h: 1, w: 1, c: cin },
        vec![
            LayerSpec::Conv2d {
                kernel_h: 1,
                kernel_w: 1,
                in_channels: cin,
                out_channels: cout,
                stride: 1,
            },
            LayerSpec::Flatten,
        ],
    );
    let dense_spec = NetworkSpec::sequential(Shape::Flat(cin), vec![dense(cin, cout)]);

    let mut rng = seed::rng(17);
    let kernel: Vec<f64> = (0..cin * cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Kernel layout [ky][kx][cin][cout] -> dense weight [cout][cin].
    let mut dense_w = vec![0.0; cin * cout];
    for ci in 0..cin {
        for co in 0..cout {
            dense_w[co * cin + ci] = kernel[ci * cout + co];
        }
    }
    let conv_params = NetworkParams {
        layers: vec![LayerParams {
            weight: kernel,
            bias: bias.clone(),
        }],
    };
    let dense_params = NetworkParams {
        layers: vec![LayerParams {
            weight: dense_w,
            bias,
        }],
    };

    let x = vec![0.3, -0.8, 0.5];
    let target = vec![0.1, -0.2];
    let conv_in = vec![vec![Tensor::grid(1, 1, cin, x.clone()).unwrap()]];
    let dense_in = vec![vec![Tensor::flat(x)]];
    let targets = vec![target];

    let out_conv = forward(&conv_spec, &conv_params, &conv_in[0]).unwrap();
    let out_dense = forward(&dense_spec, &dense_params, &dense_in[0]).unwrap();
    for (a, b) in out_conv.iter().zip(&out_dense) {
        assert!((a - b).abs() < 1e-12);
    }

    let g_conv = backward(&conv_spec, &conv_params, (&conv_in, &targets), Loss::Mse).unwrap();
    let g_dense = backward(&dense_spec, &dense_params, (&dense_in, &targets), Loss::Mse).unwrap();
    for ci in 0..cin {
        for co in 0..cout {
            let conv_g = g_conv.layers[0].weight[ci * cout + co];
            let dense_g = g_dense.layers[0].weight[co * cin + ci];
            assert!((conv_g - dense_g).abs() < 1e-12);
        }
    }
    assert_eq!(g_conv.layers[0].bias, g_dense.layers[0].bias);
}

#[test]
fn clip_examples_and_idempotence() {
    let mut small = NetworkParams {
        layers: vec![LayerParams {
            weight: vec![0.3, 0.4],
            bias: vec![],
        }],
    };
    let norm = clip_gradients(&mut small, 1.0);
    assert_eq!(norm, 0.5);
    assert_eq!(small.layers[0].weight, vec![0.3, 0.4]);

    let mut big = NetworkParams {
        layers: vec![LayerParams {
            weight: vec![3.0, 4.0],
            bias: vec![],
        }],
    };
    clip_gradients(&mut big, 1.0);
    assert!((big.layers[0].weight[0] - 0.6).abs() < 1e-12);
    assert!((big.layers[0].weight[1] - 0.8).abs() < 1e-12);
    let once = big.clone();
    clip_gradients(&mut big, 1.0);
    assert_eq!(big, once);

    let mut zeros = NetworkParams {
        layers: vec![LayerParams {
            weight: vec![0.0; 4],
            bias: vec![0.0],
        }],
    };
    clip_gradients(&mut zeros, 1.0);
    assert!(zeros.layers[0].weight.iter().all(|&g| g == 0.0));
}

fn line_data() -> TrainSet {
    let mut data = TrainSet::default();
    for i in 0..21 {
        let x = -1.0 + i as f64 / 10.0;
        data.push(vec![Tensor::flat(vec![x])], vec![x]);
    }
    data
}

#[test]
fn linear_layer_learns_identity_line() {
    let spec = NetworkSpec::sequential(Shape::Flat(1), vec![dense(1, 1)]);
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 500,
        batch_size: 21,
        clip_norm: None,
        seed: 4,
        loss: Loss::Mse,
    };
    let trained = train(&spec, &cfg, &line_data()).unwrap();
    assert_eq!(trained.loss_history.len(), 500);
    assert!(
        *trained.loss_history.last().unwrap() < 1e-4,
        "final loss {}",
        trained.loss_history.last().unwrap()
    );
}

#[test]
fn zero_epochs_returns_initialization() {
    let spec = NetworkSpec::sequential(Shape::Flat(1), vec![dense(1, 1)]);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 0,
        batch_size: 4,
        clip_norm: None,
        seed: 8,
        loss: Loss::Mse,
    };
    let trained = train(&spec, &cfg, &line_data()).unwrap();
    assert_eq!(trained.params, init_params(&spec, 8).unwrap());
    assert!(trained.loss_history.is_empty());
}

#[test]
fn training_is_bit_reproducible() {
    let spec = NetworkSpec::sequential(
        Shape::Flat(1),
        vec![
            dense(1, 6),
            LayerSpec::Activation(Activation::Tanh),
            LayerSpec::Dropout { rate: 0.2 },
            dense(6, 1),
        ],
    );
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 40,
        batch_size: 7,
        clip_norm: Some(1.0),
        seed: 123,
        loss: Loss::Mse,
    };
    let a = train(&spec, &cfg, &line_data()).unwrap();
    let b = train(&spec, &cfg, &line_data()).unwrap();
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.params, b.params);
}

#[test]
fn batch_size_above_set_size_is_rejected() {
    let spec = NetworkSpec::sequential(Shape::Flat(1), vec![dense(1, 1)]);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 1,
        batch_size: 22,
        clip_norm: None,
        seed: 0,
        loss: Loss::Mse,
    };
    assert!(matches!(
        train(&spec, &cfg, &line_data()),
        Err(paramap_core::Error::InvalidConfig(_))
    ));
}

#[test]
fn divergent_training_reports_the_epoch() {
    // An absurd learning rate blows the line fit up within a few epochs.
    let spec = NetworkSpec::sequential(Shape::Flat(1), vec![dense(1, 1)]);
    let cfg = TrainConfig {
        learning_rate: 1e12,
        epochs: 50,
        batch_size: 21,
        clip_norm: None,
        seed: 4,
        loss: Loss::Mse,
    };
    match train(&spec, &cfg, &line_data()) {
        Err(paramap_core::Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}
