//! Engine verification: independent forward oracle, finite-difference
//! gradient checks per layer kind, dropout statistics and bit-determinism.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfbd_core::nn::gradcheck::max_grad_rel_error;
use rfbd_core::nn::{
    adam_step, AdamHyper, BackwardOptions, LayerSpec, LossKind, LossTarget, Network, Padding,
    Tensor,
};

fn random_tensor(dims: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    Tensor::from_values(
        dims.to_vec(),
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn classes(batch: usize, n_classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch).map(|_| rng.gen_range(0..n_classes)).collect()
}

// ---------------------------------------------------------------------------
// forward oracles
// ---------------------------------------------------------------------------

/// Straight-line conv + relu + dense evaluation with nested loops.
fn oracle_forward(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    conv_w: &[f64],
    conv_b: &[f64],
    (filters, kh, kw): (usize, usize, usize),
    dense_w: &[f64],
    dense_b: &[f64],
    units: usize,
) -> Vec<f64> {
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let mut feat = vec![0.0; filters * oh * ow];
    for f in 0..filters {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = conv_b[f];
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iv = input[ic * h * w + (oy + ky) * w + (ox + kx)];
                            let wv = conv_w[((f * c + ic) * kh + ky) * kw + kx];
                            acc += iv * wv;
                        }
                    }
                }
                feat[f * oh * ow + oy * ow + ox] = acc.max(0.0);
            }
        }
    }
    (0..units)
        .map(|u| {
            dense_b[u]
                + feat
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * dense_w[u * feat.len() + i])
                    .sum::<f64>()
        })
        .collect()
}

#[test]
fn forward_matches_straight_line_oracle() {
    let (c, h, w) = (2usize, 3usize, 9usize);
    let (filters, kh, kw) = (4usize, 2usize, 3usize);
    let units = 5usize;
    let net = Network::<f64>::new(
        c,
        h,
        w,
        vec![
            LayerSpec::Conv2d {
                filters,
                kernel_h: kh,
                kernel_w: kw,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units },
        ],
        11,
    )
    .unwrap();

    let batch = random_tensor(&[3, c, h, w], 21, 1.0);
    let out = net.forward_batch(&batch, false, 0).unwrap();

    let conv_w = net.params.by_name("conv1.w").unwrap().value.values();
    let conv_b = net.params.by_name("conv1.b").unwrap().value.values();
    let dense_w = net.params.by_name("dense1.w").unwrap().value.values();
    let dense_b = net.params.by_name("dense1.b").unwrap().value.values();

    for s in 0..3 {
        let expect = oracle_forward(
            batch.row(s),
            (c, h, w),
            conv_w,
            conv_b,
            (filters, kh, kw),
            dense_w,
            dense_b,
            units,
        );
        for (a, b) in out.row(s).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_weight_dense_gives_zero_output() {
    let mut net = Network::<f64>::new(
        1,
        1,
        6,
        vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
        0,
    )
    .unwrap();
    for v in net.params.entries[0].value.values_mut() {
        *v = 0.0;
    }
    let batch = random_tensor(&[2, 1, 1, 6], 5, 2.0);
    let out = net.forward_batch(&batch, false, 0).unwrap();
    assert!(out.values().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_one_by_one_conv_is_identity() {
    let mut net = Network::<f64>::new(
        2,
        1,
        7,
        vec![LayerSpec::Conv2d {
            filters: 2,
            kernel_h: 1,
            kernel_w: 1,
            padding: Padding::Valid,
        }],
        0,
    )
    .unwrap();
    // weight dims [2, 2, 1, 1]: identity across channels
    let wv = net.params.entries[0].value.values_mut();
    wv.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    let batch = random_tensor(&[2, 2, 1, 7], 9, 1.5);
    let out = net.forward_batch(&batch, false, 0).unwrap();
    assert_eq!(out.values(), batch.values());
}

// ---------------------------------------------------------------------------
// gradient checks, one per layer kind
// ---------------------------------------------------------------------------

fn check_grads(net: &mut Network<f64>, batch: Tensor<f64>, kind: LossKind, training: bool) {
    let opts = BackwardOptions {
        training,
        dropout_seed: 77,
        param_grads: true,
    };
    let worst = match kind {
        LossKind::SoftmaxCrossEntropy => {
            let t = classes(batch.dims()[0], net.output_len(), 31);
            max_grad_rel_error(net, &batch, &LossTarget::Classes(&t), kind, opts, 100, 400).unwrap()
        }
        LossKind::MeanSquaredError => {
            let t = random_tensor(&[batch.dims()[0], net.output_len()], 32, 1.0);
            max_grad_rel_error(net, &batch, &LossTarget::Values(&t), kind, opts, 100, 401).unwrap()
        }
    };
    assert!(worst < 1e-4, "finite-difference mismatch {worst}");
}

#[test]
fn conv_valid_gradients_match_finite_differences() {
    let mut net = Network::<f64>::new(
        2,
        2,
        8,
        vec![
            LayerSpec::Conv2d {
                filters: 3,
                kernel_h: 2,
                kernel_w: 3,
                padding: Padding::Valid,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
        ],
        42,
    )
    .unwrap();
    check_grads(&mut net, random_tensor(&[4, 2, 2, 8], 1, 1.0), LossKind::SoftmaxCrossEntropy, false);
}

#[test]
fn conv_same_padding_gradients_match_finite_differences() {
    let mut net = Network::<f64>::new(
        2,
        1,
        8,
        vec![
            LayerSpec::Conv2d {
                filters: 3,
                kernel_h: 1,
                kernel_w: 5,
                padding: Padding::Same,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                filters: 2,
                kernel_h: 1,
                kernel_w: 1,
                padding: Padding::Same,
            },
        ],
        43,
    )
    .unwrap();
    check_grads(&mut net, random_tensor(&[3, 2, 1, 8], 2, 1.0), LossKind::MeanSquaredError, false);
}

#[test]
fn dense_relu_gradients_match_finite_differences() {
    let mut net = Network::<f64>::new(
        1,
        1,
        10,
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 5 },
        ],
        44,
    )
    .unwrap();
    check_grads(&mut net, random_tensor(&[6, 1, 1, 10], 3, 1.0), LossKind::SoftmaxCrossEntropy, false);
}

#[test]
fn dropout_gradients_match_finite_differences_under_fixed_mask() {
    let mut net = Network::<f64>::new(
        1,
        1,
        12,
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 16 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.4 },
            LayerSpec::Dense { units: 3 },
        ],
        45,
    )
    .unwrap();
    check_grads(&mut net, random_tensor(&[5, 1, 1, 12], 4, 1.0), LossKind::SoftmaxCrossEntropy, true);
}

#[test]
fn linear_model_mse_gradient_matches_closed_form() {
    // one dense layer, no bias contribution checked separately
    let mut net = Network::<f64>::new(
        1,
        1,
        4,
        vec![LayerSpec::Flatten, LayerSpec::Dense { units: 1 }],
        46,
    )
    .unwrap();
    let batch = random_tensor(&[8, 1, 1, 4], 5, 1.0);
    let targets = random_tensor(&[8, 1], 6, 1.0);
    let out = net
        .backward_batch(
            &batch,
            &LossTarget::Values(&targets),
            LossKind::MeanSquaredError,
            BackwardOptions {
                training: false,
                ..Default::default()
            },
        )
        .unwrap();

    // closed form: dW = 2 X^T (X w - y) / B for scalar output
    let w = net.params.by_name("dense1.w").unwrap().value.values();
    let b0 = net.params.by_name("dense1.b").unwrap().value.values()[0];
    let mut expect = vec![0.0f64; 4];
    for s in 0..8 {
        let x = batch.row(s);
        let pred: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b0;
        let r = pred - targets.values()[s];
        for (e, xv) in expect.iter_mut().zip(x) {
            *e += 2.0 * r * xv / 8.0;
        }
    }
    for (g, e) in out.grads[0].values().iter().zip(&expect) {
        assert!((g - e).abs() < 1e-8, "{g} vs {e}");
    }
}

// ---------------------------------------------------------------------------
// dropout statistics
// ---------------------------------------------------------------------------

#[test]
fn dropout_expectation_preserves_activation() {
    let net = Network::<f64>::new(
        1,
        1,
        8,
        vec![LayerSpec::Dropout { rate: 0.6 }],
        0,
    )
    .unwrap();
    let batch = Tensor::from_values(vec![1, 1, 1, 8], vec![1.0; 8]).unwrap();
    let trials = 100_000u64;
    let mut mean = vec![0.0f64; 8];
    for t in 0..trials {
        let out = net.forward_batch(&batch, true, t).unwrap();
        for (m, v) in mean.iter_mut().zip(out.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= trials as f64;
        assert!((*m - 1.0).abs() < 0.01, "mean dropped activation {m}");
    }
}

#[test]
fn dropout_inactive_outside_training() {
    let net = Network::<f64>::new(
        1,
        1,
        8,
        vec![LayerSpec::Dropout { rate: 0.9 }],
        0,
    )
    .unwrap();
    let batch = random_tensor(&[2, 1, 1, 8], 8, 1.0);
    let out = net.forward_batch(&batch, false, 123).unwrap();
    assert_eq!(out.values(), batch.values());
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

fn train_few_steps(threads: usize) -> Vec<f32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let mut net = Network::<f32>::new(
            1,
            2,
            16,
            vec![
                LayerSpec::Conv2d {
                    filters: 6,
                    kernel_h: 1,
                    kernel_w: 3,
                    padding: Padding::Valid,
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
            ],
            7,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for step in 0..5 {
            let n: usize = 64 * 32;
            let values: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let batch = Tensor::from_values(vec![64, 1, 2, 16], values).unwrap();
            let targets: Vec<usize> = (0..64).map(|i| (i + step) % 4).collect();
            let out = net
                .backward_batch(
                    &batch,
                    &LossTarget::Classes(&targets),
                    LossKind::SoftmaxCrossEntropy,
                    BackwardOptions {
                        training: true,
                        dropout_seed: step as u64,
                        param_grads: true,
                    },
                )
                .unwrap();
            adam_step(&mut net.params, &out.grads, &AdamHyper::default()).unwrap();
        }
        net.params
            .entries
            .iter()
            .flat_map(|e| e.value.values().to_vec())
            .collect()
    })
}

#[test]
fn training_is_bit_identical_across_worker_counts() {
    let single = train_few_steps(1);
    let multi = train_few_steps(4);
    assert_eq!(single, multi);
}

// ---------------------------------------------------------------------------
// error paths
// ---------------------------------------------------------------------------

#[test]
fn batch_shape_mismatch_rejected() {
    let net = Network::<f64>::new(
        1,
        2,
        8,
        vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
        0,
    )
    .unwrap();
    let bad = random_tensor(&[2, 1, 2, 9], 1, 1.0);
    assert!(net.forward_batch(&bad, false, 0).is_err());
}

#[test]
fn loss_target_mismatch_rejected() {
    let net = Network::<f64>::new(
        1,
        1,
        4,
        vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
        0,
    )
    .unwrap();
    let batch = random_tensor(&[2, 1, 1, 4], 2, 1.0);
    let t = classes(2, 2, 3);
    assert!(net
        .backward_batch(
            &batch,
            &LossTarget::Classes(&t),
            LossKind::MeanSquaredError,
            BackwardOptions::default(),
        )
        .is_err());
}

#[test]
fn invalid_stacks_rejected() {
    // dense straight on spatial input
    assert!(Network::<f64>::new(1, 2, 8, vec![LayerSpec::Dense { units: 2 }], 0).is_err());
    // kernel larger than input
    assert!(Network::<f64>::new(
        1,
        2,
        8,
        vec![LayerSpec::Conv2d {
            filters: 1,
            kernel_h: 3,
            kernel_w: 3,
            padding: Padding::Valid
        }],
        0
    )
    .is_err());
    // dropout rate out of range
    assert!(Network::<f64>::new(1, 2, 8, vec![LayerSpec::Dropout { rate: 1.0 }], 0).is_err());
}
