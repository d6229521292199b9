use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    Matrix::new(n, d, (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

fn bce_of(model: &Model, x: &Matrix, y: &[f64]) -> f64 {
    bce_loss(&model.predict(x).unwrap(), y, None).unwrap().0
}

/// Central finite differences of the mean BCE loss.
fn fd_gradient(model: &Model, x: &Matrix, y: &[f64], h: f64) -> Vec<f64> {
    let base = model.flatten();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus.values_mut()[i] += h;
            let mut minus = base.clone();
            minus.values_mut()[i] -= h;
            let lp = bce_of(&model.unflatten(&plus).unwrap(), x, y);
            let lm = bce_of(&model.unflatten(&minus).unwrap(), x, y);
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn assert_grad_close(analytic: &[f64], numeric: &[f64]) {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let tol = 1e-4 * a.abs().max(n.abs()) + 1e-7;
        assert!((a - n).abs() <= tol, "entry {i}: analytic {a} vs numeric {n}");
    }
}

#[test]
fn identity_layer_forward_is_identity() {
    let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
    let model = SequentialModel::new(vec![layer]).unwrap();
    let x = random_batch(&mut rng(1), 4, 3);
    let (pred, _) = model.forward(&x).unwrap();
    assert_eq!(pred, x);
}

#[test]
fn forward_rejects_wrong_input_width() {
    let model = arch::heart::dnn().build(13, &mut rng(0)).unwrap();
    let err = model.forward(&Matrix::zeros(2, 12)).unwrap_err();
    assert!(err.to_string().contains("expected 13, got 12"), "{err}");
}

/// Independent forward oracle: explicit loops over the layer formula.
fn reference_forward(model: &SequentialModel, x: &Matrix) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    for layer in model.layers() {
        let w = layer.weights();
        rows = rows
            .iter()
            .map(|input| {
                (0..layer.out_dim())
                    .map(|j| {
                        let mut z = layer.bias()[j];
                        for (k, xi) in input.iter().enumerate() {
                            z += xi * w.get(k, j);
                        }
                        match layer.activation() {
                            Activation::Identity => z,
                            Activation::Relu => {
                                if z > 0.0 {
                                    z
                                } else {
                                    0.0
                                }
                            }
                            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                        }
                    })
                    .collect()
            })
            .collect();
    }
    rows.into_iter().flatten().collect()
}

#[test]
fn dnn_forward_matches_reference() {
    let mut r = rng(42);
    let model = arch::heart::dnn().build_sequential(13, &mut r).unwrap();
    let x = random_batch(&mut r, 16, 13);
    let (pred, _) = model.forward(&x).unwrap();
    let reference = reference_forward(&model, &x);
    for (a, b) in pred.as_slice().iter().zip(&reference) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn fenda_head_ignoring_local_features() {
    let mut r = rng(3);
    let mut fenda = arch::heart::fenda().build_fenda(13, &mut r).unwrap();
    // zero the head weights reading the local extractor (latent rows 5..10)
    let head = fenda.head_mut();
    let w = head.layers_mut()[0].weights_mut();
    for row in 5..10 {
        w.set(row, 0, 0.0);
    }
    let x = random_batch(&mut r, 8, 13);
    let before = fenda.predict(&x).unwrap();

    // Prediction equals the head applied to [z; 0].
    let z = fenda.global_extractor().predict(&x).unwrap();
    let restricted = fenda.head().predict(&z.hcat(&Matrix::zeros(8, 5)).unwrap()).unwrap();
    for (a, b) in before.as_slice().iter().zip(restricted.as_slice()) {
        assert!((a - b).abs() < 1e-15);
    }

    // Perturbing the local extractor leaves predictions unchanged.
    fenda
        .local_extractor_mut()
        .visit_mut(&mut |p| *p += r.random_range(-3.0..3.0));
    assert_eq!(fenda.predict(&x).unwrap(), before);
}

#[test]
fn zero_loss_grad_gives_zero_gradients() {
    let mut r = rng(5);
    for spec in [arch::heart::dnn(), arch::heart::fenda()] {
        let model = spec.build(13, &mut r).unwrap();
        let x = random_batch(&mut r, 4, 13);
        let (_, cache) = model.forward(&x).unwrap();
        let g = model.backward(&cache, &Matrix::zeros(4, 1)).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
        assert_eq!(g.roles(), model.flatten().roles());
    }
}

#[test]
fn scalar_logistic_closed_form() {
    let layer = DenseLayer::new(Matrix::zeros(1, 1), vec![0.0], Activation::Sigmoid).unwrap();
    let model = Model::Sequential(SequentialModel::new(vec![layer]).unwrap());
    let x = Matrix::column(vec![1.0]).unwrap();
    let (pred, cache) = model.forward(&x).unwrap();
    let (_, d) = bce_loss(&pred, &[1.0], None).unwrap();
    let g = model.backward(&cache, &d).unwrap();
    assert!((g.values()[0] + 0.5).abs() < 1e-12);
    assert!((g.values()[1] + 0.5).abs() < 1e-12);
}

#[test]
fn finite_differences_sequential_and_fenda() {
    let mut r = rng(11);
    let specs = [
        arch::heart::logistic(),
        ModelSpec::Mlp { hidden: vec![4, 3] },
        ModelSpec::Fenda {
            global: vec![3],
            local: vec![2],
            head_hidden: vec![2],
        },
    ];
    for spec in &specs {
        let model = spec.build(5, &mut r).unwrap();
        let x = random_batch(&mut r, 6, 5);
        let y: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
        let (pred, cache) = model.forward(&x).unwrap();
        let (_, d) = bce_loss(&pred, &y, None).unwrap();
        let g = model.backward(&cache, &d).unwrap();
        assert_grad_close(g.values(), &fd_gradient(&model, &x, &y, 1e-5));
    }
}

#[test]
fn stale_cache_rejected() {
    let mut r = rng(2);
    let mut model = arch::heart::dnn().build(13, &mut r).unwrap();
    let x = random_batch(&mut r, 3, 13);
    let (_, cache) = model.forward(&x).unwrap();
    model.visit_mut(&mut |p| *p += 1.0);
    assert!(matches!(
        model.backward(&cache, &Matrix::zeros(3, 1)),
        Err(crate::Error::StaleCache(_))
    ));
    let other = arch::heart::fenda().build(13, &mut r).unwrap();
    assert!(other.backward(&cache, &Matrix::zeros(3, 1)).is_err());
    let (_, cache) = model.forward(&x).unwrap();
    assert!(model.backward(&cache, &Matrix::zeros(2, 1)).is_err());
}

#[test]
fn table_parameter_budgets() {
    let mut r = rng(0);
    assert_eq!(count_params(&arch::heart::logistic().build(13, &mut r).unwrap()), 14);
    assert_eq!(count_params(&arch::heart::dnn().build(13, &mut r).unwrap()), 151);
    assert_eq!(
        count_params(&arch::heart::apfl_twin().build_twins(13, &mut r).unwrap()),
        152
    );
    let fenda = arch::heart::fenda().build(13, &mut r).unwrap();
    assert_eq!(count_params(&fenda), 151);
    assert_eq!(
        count_params_by_role(&fenda),
        RoleCounts {
            global: 70,
            local: 70,
            classifier: 11
        }
    );
    let dnn = arch::heart::dnn().build(13, &mut r).unwrap();
    assert_eq!(count_params_by_role(&dnn).global, 140);
}

#[test]
fn flatten_unflatten_roundtrip_is_bitwise() {
    let mut r = rng(9);
    for spec in [arch::heart::logistic(), arch::heart::dnn(), arch::heart::fenda()] {
        let model = spec.build(13, &mut r).unwrap();
        let flat = model.flatten();
        let mut blank = spec.build(13, &mut r).unwrap();
        blank.load(&flat).unwrap();
        assert_eq!(blank, model);
        assert_eq!(blank.flatten(), flat);
        let short = ParameterVector::uniform(vec![0.0; flat.len() - 1], Role::Global);
        assert!(blank.load(&short).is_err());
    }
    let twins = arch::heart::apfl_twin().build_twins(13, &mut r).unwrap();
    assert_eq!(twins.unflatten(&twins.flatten()).unwrap(), twins);
}

#[test]
fn flatten_order_is_layer_major_weights_first() {
    let l1 = DenseLayer::new(
        Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        vec![5.0, 6.0],
        Activation::Relu,
    )
    .unwrap();
    let l2 = DenseLayer::new(
        Matrix::from_rows(&[vec![7.0], vec![8.0]]).unwrap(),
        vec![9.0],
        Activation::Sigmoid,
    )
    .unwrap();
    let m = SequentialModel::new(vec![l1, l2]).unwrap();
    assert_eq!(m.flatten().values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
}

#[test]
fn twin_mixing() {
    let mut r = rng(4);
    let twins = arch::heart::apfl_twin().build_twins(13, &mut r).unwrap();
    assert_eq!(twins.mixed(1.0), twins.personal);
    assert_eq!(twins.mixed(0.0), twins.global);
}

#[test]
fn cosine_examples() {
    assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 1.0]) - 0.8).abs() < 1e-15);
    assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradients_match_finite_differences(seed in any::<u64>(), hidden in 1usize..5, n in 1usize..5) {
            let mut r = rng(seed);
            let model = ModelSpec::Mlp { hidden: vec![hidden] }.build(3, &mut r).unwrap();
            let x = random_batch(&mut r, n, 3);
            let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..2u8))).collect();
            let (pred, cache) = model.forward(&x).unwrap();
            let (_, d) = bce_loss(&pred, &y, None).unwrap();
            let g = model.backward(&cache, &d).unwrap();
            assert_grad_close(g.values(), &fd_gradient(&model, &x, &y, 1e-5));
        }

        #[test]
        fn bce_nonnegative(p in 0.0f64..1.0, y in 0u8..2) {
            let (l, _) = bce_loss(&Matrix::column(vec![p]).unwrap(), &[f64::from(y)], None).unwrap();
            prop_assert!(l >= 0.0);
        }

        #[test]
        fn roundtrip_any_width(seed in any::<u64>(), a in 1usize..6, b in 1usize..6) {
            let spec = ModelSpec::Fenda { global: vec![a], local: vec![b], head_hidden: vec![] };
            let m = spec.build(4, &mut rng(seed)).unwrap();
            prop_assert_eq!(m.unflatten(&m.flatten()).unwrap(), m);
        }
    }
}
