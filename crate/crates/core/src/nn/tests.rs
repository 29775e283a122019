use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::random_batch;
use super::*;
use crate::array::DenseArray;

/// Loss `Σ c ⊙ y` with fixed random coefficients exercises every output entry.
fn projection_loss(shape: &[usize], seed: u64) -> impl Fn(&DenseArray<f64>) -> crate::Result<(f64, DenseArray<f64>)> {
    let coef = random_batch(shape.to_vec(), seed);
    move |y: &DenseArray<f64>| {
        let v = y.data().iter().zip(coef.data()).map(|(a, b)| a * b).sum();
        Ok((v, coef.clone()))
    }
}

fn ce_loss(labels: Vec<usize>) -> impl Fn(&DenseArray<f64>) -> crate::Result<(f64, DenseArray<f64>)> {
    move |y: &DenseArray<f64>| loss::cross_entropy(y, &labels)
}

fn kink_free(net: &Network, batch_shape: Vec<usize>, min_margin: f64) -> (ModelParams<f64>, DenseArray<f64>) {
    gradcheck::kink_free_draw(net, &batch_shape, min_margin, 500).unwrap().expect("no kink-free draw found")
}

#[test]
fn dense_identity() {
    let net = Network::new(vec![3], vec![LayerSpec::Dense { units: 3 }]).unwrap();
    let mut w = vec![0.0f64; 9];
    for i in 0..3 {
        w[i * 3 + i] = 1.0;
    }
    let params = ModelParams {
        layers: vec![Some(LayerParams {
            weight: DenseArray::new(vec![3, 3], w).unwrap(),
            bias: DenseArray::zeros(vec![3]),
        })],
    };
    let x = DenseArray::new(vec![1, 3], vec![0.5, -2.0, 7.0]).unwrap();
    assert_eq!(predict(&net, &params, &x).unwrap().data(), x.data());
}

#[test]
fn softmax_of_zero_logits_is_uniform() {
    let net = Network::new(vec![4], vec![LayerSpec::Softmax]).unwrap();
    let params = net.init_params::<f64>(0);
    let y = predict(&net, &params, &DenseArray::zeros(vec![1, 4])).unwrap();
    assert_eq!(y.data(), &[0.25; 4]);
}

#[test]
fn maxpool_two_by_two() {
    let net = Network::new(vec![1, 2, 2], vec![LayerSpec::MaxPool2d { size: 2 }]).unwrap();
    let params = net.init_params::<f32>(0);
    let x = DenseArray::new(vec![1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let y = predict(&net, &params, &x).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[4.0]);
}

#[test]
fn shape_mismatch_names_layer() {
    let net = Network::new(vec![4], vec![LayerSpec::Dense { units: 2 }]).unwrap();
    let params = net.init_params::<f32>(0);
    let err = predict(&net, &params, &DenseArray::zeros(vec![2, 5])).unwrap_err();
    assert!(matches!(err, crate::Error::ShapeMismatch { layer: 0, .. }));
}

#[test]
fn linear_softmax_gradient_closed_form() {
    let (n, d, c) = (5, 3, 4);
    let net = Network::new(vec![d], vec![LayerSpec::Dense { units: c }, LayerSpec::Softmax]).unwrap();
    let params = net.init_params::<f64>(3);
    let x = random_batch(vec![n, d], 4);
    let labels = vec![0, 3, 1, 1, 2];
    let acts = forward(&net, &params, &x, Mode::Infer).unwrap();
    let (_, g) = loss::cross_entropy(acts.output(), &labels).unwrap();
    let grads = backward(&net, &params, &acts, &g).unwrap();
    let dw = &grads.params.layers[0].as_ref().unwrap().weight;
    let p = acts.output();
    for k in 0..d {
        for j in 0..c {
            let expected: f64 =
                (0..n).map(|i| x.row(i)[k] * (p.row(i)[j] - if labels[i] == j { 1.0 } else { 0.0 })).sum::<f64>()
                    / n as f64;
            assert!((dw.data()[k * c + j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let net = Network::new(
        vec![1, 6, 6],
        vec![
            LayerSpec::Conv2d { filters: 2, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
        ],
    )
    .unwrap();
    let params = net.init_params::<f64>(1);
    let x = random_batch(vec![2, 1, 6, 6], 2);
    let acts = forward(&net, &params, &x, Mode::Infer).unwrap();
    let grads = backward(&net, &params, &acts, &DenseArray::zeros(vec![2, 3])).unwrap();
    assert!(grads.params.arrays().all(|a| a.data().iter().all(|&v| v == 0.0)));
    assert_eq!(grads.params.arrays().count(), params.arrays().count());
}

#[test]
fn gradient_shapes_match_params() {
    let net =
        Network::new(vec![4], vec![LayerSpec::Dense { units: 5 }, LayerSpec::Relu, LayerSpec::Dense { units: 2 }])
            .unwrap();
    let params = net.init_params::<f32>(0);
    let x = DenseArray::new(vec![1, 4], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let acts = forward(&net, &params, &x, Mode::Infer).unwrap();
    let grads = backward(&net, &params, &acts, &DenseArray::new(vec![1, 2], vec![1.0, -1.0]).unwrap()).unwrap();
    for (a, b) in grads.params.arrays().zip(params.arrays()) {
        assert_eq!(a.shape(), b.shape());
    }
    assert_eq!(grads.input.shape(), x.shape());
}

#[test]
fn truncated_activations_rejected() {
    let net = Network::new(vec![4], vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax]).unwrap();
    let params = net.init_params::<f64>(0);
    let x = random_batch(vec![1, 4], 0);
    let mut acts = forward(&net, &params, &x, Mode::Infer).unwrap();
    acts.outputs.pop();
    assert!(matches!(
        backward(&net, &params, &acts, &DenseArray::zeros(vec![1, 2])),
        Err(crate::Error::MissingActivation(_))
    ));
}

#[test]
fn gradcheck_linear() {
    let net = Network::new(vec![6], vec![LayerSpec::Dense { units: 3 }]).unwrap();
    let params = net.init_params::<f64>(11);
    let batch = random_batch(vec![4, 6], 12);
    let report = grad_check(&net, &params, &batch, projection_loss(&[4, 3], 13), 1e-5).unwrap();
    assert!(report.max_relative_error < 1e-9, "{report:?}");
}

#[test]
fn gradcheck_mlp_two_layer_backward_example() {
    let net = Network::new(
        vec![5],
        vec![LayerSpec::Dense { units: 7 }, LayerSpec::Relu, LayerSpec::Dense { units: 3 }, LayerSpec::Softmax],
    )
    .unwrap();
    let (params, batch) = kink_free(&net, vec![4, 5], 1e-2);
    let report = grad_check(&net, &params, &batch, ce_loss(vec![0, 2, 1, 2]), 1e-4).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn gradcheck_mlp_relu_softmax() {
    let net = Network::new(
        vec![6],
        vec![
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::Dropout { keep: 0.75 },
            LayerSpec::Dense { units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Softmax,
        ],
    )
    .unwrap();
    let (params, batch) = kink_free(&net, vec![3, 6], 1e-3);
    let report = grad_check(&net, &params, &batch, ce_loss(vec![3, 0, 1]), 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-6, "{report:?}");
}

#[test]
fn gradcheck_conv_pool_dense() {
    let net = Network::new(
        vec![2, 8, 8],
        vec![
            LayerSpec::Conv2d { filters: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { size: 2 },
            LayerSpec::Conv2d { filters: 2, kernel: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ],
    )
    .unwrap();
    let (params, batch) = kink_free(&net, vec![2, 2, 8, 8], 1e-4);
    let report = grad_check(&net, &params, &batch, ce_loss(vec![1, 2]), 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn infer_mode_is_deterministic() {
    let net = Network::new(
        vec![1, 7, 7],
        vec![
            LayerSpec::Conv2d { filters: 4, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::Dropout { keep: 0.5 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ],
    )
    .unwrap();
    let params = net.init_params::<f32>(5);
    let x: DenseArray<f32> = random_batch(vec![3, 1, 7, 7], 6).cast();
    let a = predict(&net, &params, &x).unwrap();
    let b = predict(&net, &params, &x).unwrap();
    assert_eq!(a.data(), b.data());
    for i in 0..3 {
        let s: f32 = a.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dropout_train_mean_matches_infer() {
    let net = Network::new(vec![6], vec![LayerSpec::Dense { units: 4 }, LayerSpec::Dropout { keep: 0.75 }]).unwrap();
    let params = net.init_params::<f64>(9);
    let x = random_batch(vec![1, 6], 10);
    let infer = predict(&net, &params, &x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 20_000;
    let mut mean = vec![0.0; 4];
    for _ in 0..draws {
        let acts = forward(&net, &params, &x, Mode::Train(&mut rng)).unwrap();
        for (m, v) in mean.iter_mut().zip(acts.output().data()) {
            *m += v / draws as f64;
        }
    }
    for (m, v) in mean.iter().zip(infer.data()) {
        assert!((m - v).abs() <= 0.02 * v.abs(), "{m} vs {v}");
    }
}

#[test]
fn l2_shrinks_nonzero_weights() {
    let net = Network::new(vec![3], vec![LayerSpec::Dense { units: 2 }]).unwrap();
    let mut params = net.init_params::<f64>(4);
    let before = params.clone();
    let zero = params.zeros_like();
    sgd_step(&mut params, &zero, 0.1, 0.01).unwrap();
    for (a, b) in params.arrays().zip(before.arrays()) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            if y != 0.0 {
                assert!(x.abs() < y.abs());
            }
        }
    }
}

#[test]
fn injected_gradient_matches_split_network() {
    // Injecting at an intermediate layer equals backpropagating only through the lower part.
    let net =
        Network::new(vec![4], vec![LayerSpec::Dense { units: 5 }, LayerSpec::Relu, LayerSpec::Dense { units: 2 }])
            .unwrap();
    let params = net.init_params::<f64>(2);
    let x = random_batch(vec![3, 4], 3);
    let acts = forward(&net, &params, &x, Mode::Infer).unwrap();
    let g = random_batch(vec![3, 5], 4);
    let grads = backward_injected(&net, &params, &acts, &[(1, &g)]).unwrap();
    assert!(grads.params.layers[2].as_ref().unwrap().weight.data().iter().all(|&v| v == 0.0));

    let lower = Network::new(vec![4], vec![LayerSpec::Dense { units: 5 }, LayerSpec::Relu]).unwrap();
    let lower_params = ModelParams { layers: params.layers[..2].to_vec() };
    let lacts = forward(&lower, &lower_params, &x, Mode::Infer).unwrap();
    let lgrads = backward(&lower, &lower_params, &lacts, &g).unwrap();
    assert_eq!(lgrads.params.layers[0], grads.params.layers[0]);
    assert_eq!(lgrads.input, grads.input);
}
