mod common;

use common::*;
use pcbnet::tensor::{
    adam_step, maxpool3d_backward, maxpool3d_forward, relu, softmax_cross_entropy, AdamConfig, AdamState, Tensor,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn conv_matches_oracle_f32() {
    for (i, (dims, oc)) in oracle::conv_shapes(1, 24).into_iter().enumerate() {
        let err = oracle::conv_error::<f32>(dims, oc, 100 + i as u64);
        assert!(err < 1e-6, "{dims:?} -> {oc}: {err:e}");
    }
}

#[test]
fn conv_matches_oracle_f64() {
    for (i, (dims, oc)) in oracle::conv_shapes(2, 20).into_iter().enumerate() {
        let err = oracle::conv_error::<f64>(dims, oc, 200 + i as u64);
        assert!(err < 1e-12, "{dims:?} -> {oc}: {err:e}");
    }
}

#[test]
fn pool_matches_oracle() {
    assert_eq!(oracle::pool_error(3, 25), 0.0);
}

#[test]
fn dense_matches_oracle() {
    let (f32_err, f64_err) = oracle::dense_error(4, 25);
    assert!(f32_err < 1e-6, "{f32_err:e}");
    assert!(f64_err < 1e-12, "{f64_err:e}");
}

#[test]
fn pool_backward_conserves_gradient_mass() {
    let mut r = rng(5);
    for _ in 0..10 {
        let dims = [2, 3, r.random_range(2..7), r.random_range(2..7), r.random_range(2..7)];
        let input: Tensor<f64> = random_tensor(&mut r, &dims, -1.0, 1.0);
        let (out, idx) = maxpool3d_forward(&input).unwrap();
        let g: Tensor<f64> = random_tensor(&mut r, out.dims(), -1.0, 1.0);
        let back = maxpool3d_backward(&idx, &g).unwrap();
        assert_eq!(back.dims(), input.dims());
        assert!((back.sum() - g.sum()).abs() < 1e-12);
        // exactly one nonzero per window at most
        assert!(back.data().iter().filter(|v| **v != 0.0).count() <= g.len());
    }
}

#[test]
fn adam_ignores_zero_gradient_after_moments_decay() {
    let mut state = AdamState::<f64>::new(AdamConfig::default(), 4);
    let mut p = vec![0.5, -0.25, 1.0, 0.0];
    let before = p.clone();
    adam_step("w", &mut p, &[0.0; 4], &mut state).unwrap();
    assert_eq!(p, before);
    assert_eq!(state.step_count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(logits in prop::collection::vec(-50.0f64..50.0, 2..40), seed in any::<u64>()) {
        let n = logits.len() / 2;
        let t = Tensor::new(vec![n, 2], logits[..2 * n].to_vec()).unwrap();
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        let ce = softmax_cross_entropy(&t, &labels).unwrap();
        for row in ce.probabilities.data().chunks_exact(2) {
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        prop_assert!(ce.loss >= 0.0 && ce.loss.is_finite());
        for row in ce.grad_logits.data().chunks_exact(2) {
            prop_assert!((row[0] + row[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_values_come_from_their_window(d in 2usize..6, h in 2usize..6, w in 2usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let input: Tensor<f32> = random_tensor(&mut r, &[1, 2, d, h, w], -1.0, 1.0);
        let (out, idx) = maxpool3d_forward(&input).unwrap();
        for (v, &at) in out.data().iter().zip(idx.winners()) {
            prop_assert_eq!(*v, input.data()[at]);
        }
    }

    #[test]
    fn relu_is_idempotent(values in prop::collection::vec(-10.0f32..10.0, 1..64)) {
        let t = Tensor::new(vec![values.len()], values).unwrap();
        let once = relu(&t);
        prop_assert_eq!(relu(&once), once.clone());
        prop_assert!(once.data().iter().all(|v| *v >= 0.0));
    }
}
