use proptest::prelude::*;

use super::*;
use crate::gradcheck::{self, check, random_tensor, weighted_sum};

fn m(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn unary(x: Tensor, f: impl FnOnce(&mut Graph, Var) -> Result<Var, DiffError>) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(x).unwrap();
    let out = f(&mut g, v).unwrap();
    g.value(out).clone()
}

#[test]
fn matmul_identity_and_hand_expansion() {
    let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let mut g = Graph::new();
    let av = g.constant(a.clone()).unwrap();
    let iv = g.constant(Tensor::identity(2)).unwrap();
    let bv = g.constant(m(&[&[5.0], &[6.0]])).unwrap();
    let ai = g.matmul(av, iv).unwrap();
    let ab = g.matmul(av, bv).unwrap();
    assert_eq!(g.value(ai), &a);
    assert_eq!(g.value(ab).shape(), &[2, 1]);
    assert_eq!(g.value(ab).data(), &[17.0, 39.0]);
}

#[test]
fn matmul_rejects_inner_dim_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    assert!(matches!(g.matmul(a, b), Err(DiffError::ShapeMismatch { .. })));
}

#[test]
fn softmax_uniform_and_stable() {
    let s = unary(Tensor::vector(vec![0.0, 0.0, 0.0]).unwrap(), |g, v| g.softmax(v, 0));
    assert!(close(s.data(), &[1.0 / 3.0; 3], 1e-15));
    let s = unary(Tensor::vector(vec![1000.0, 0.0, -1000.0]).unwrap(), |g, v| g.softmax(v, 0));
    assert!(s.is_finite());
    assert_eq!(s.data()[0], 1.0);
    assert_eq!(s.data()[2], 0.0);
    assert!(s.data()[1] < 1e-300);
}

#[test]
fn softmax_along_columns_of_a_matrix() {
    let x = m(&[&[0.0, 1.0], &[0.0, 1.0]]);
    let s = unary(x, |g, v| g.softmax(v, 0));
    assert!(close(s.data(), &[0.5; 4], 1e-15));
}

#[test]
fn cross_entropy_closed_forms() {
    let ce = |logits: Vec<f64>, t: usize| {
        let mut g = Graph::new();
        let v = g.constant(Tensor::vector(logits).unwrap()).unwrap();
        let l = g.cross_entropy(v, t).unwrap();
        g.value(l).item()
    };
    assert!((ce(vec![0.3; 4], 2) - 4f64.ln()).abs() < 1e-15);
    let expected = (2.0 * (-10f64).exp()).ln_1p();
    assert!((ce(vec![10.0, 0.0, 0.0], 0) - expected).abs() < 1e-12);
    assert!((expected - 9.08e-5).abs() < 1e-7);
}

#[test]
fn cross_entropy_rejects_bad_target() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::vector(vec![0.0, 1.0]).unwrap()).unwrap();
    assert!(matches!(g.cross_entropy(v, 2), Err(DiffError::IndexOutOfRange { .. })));
}

#[test]
fn layer_norm_of_constant_is_bias() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![4.0; 5]).unwrap()).unwrap();
    let gain = g.constant(Tensor::vector(vec![2.0, -1.0, 3.0, 0.5, 7.0]).unwrap()).unwrap();
    let bias = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap()).unwrap();
    let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
    assert!(close(g.value(y).data(), &[0.1, 0.2, 0.3, 0.4, 0.5], 1e-15));
}

#[test]
fn layer_norm_closed_form() {
    // x = [1, 3]: mean 2, variance 1 → x̂ = [-1, 1] / sqrt(1 + eps).
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 3.0]).unwrap()).unwrap();
    let gain = g.constant(Tensor::vector(vec![1.0, 1.0]).unwrap()).unwrap();
    let bias = g.constant(Tensor::vector(vec![0.0, 0.0]).unwrap()).unwrap();
    let y = g.layer_norm(x, gain, bias, 0.0).unwrap();
    assert!(close(g.value(y).data(), &[-1.0, 1.0], 1e-15));
}

#[test]
fn relu_linear_and_shape_ops() {
    let r = unary(Tensor::vector(vec![-1.0, 2.0]).unwrap(), |g, v| g.relu(v));
    assert_eq!(r.data(), &[0.0, 2.0]);

    let mut g = Graph::new();
    let x = g.constant(m(&[&[1.0, 2.0]])).unwrap();
    let w = g.constant(m(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, 3.0]])).unwrap();
    let b = g.constant(Tensor::vector(vec![0.5, 0.5, 0.5]).unwrap()).unwrap();
    let y = g.linear(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[1.5, 2.5, 8.5]);

    let t = g.transpose(w).unwrap();
    assert_eq!(g.value(t).shape(), &[3, 2]);
    assert_eq!(g.value(t).data(), &[1.0, 0.0, 0.0, 1.0, 2.0, 3.0]);

    let c = g.concat(&[x, x], 1).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 2.0, 1.0, 2.0]);
    let c = g.concat(&[x, x], 0).unwrap();
    assert_eq!(g.value(c).shape(), &[2, 2]);
    let s = g.slice_cols(w, 1, 3).unwrap();
    assert_eq!(g.value(s).data(), &[0.0, 2.0, 1.0, 3.0]);
    let s = g.slice_rows(w, 1, 2).unwrap();
    assert_eq!(g.value(s).data(), &[0.0, 1.0, 3.0]);
    assert!(matches!(g.slice_rows(w, 1, 3), Err(DiffError::SliceOutOfRange { .. })));
    let s = g.scale(x, -2.0).unwrap();
    assert_eq!(g.value(s).data(), &[-2.0, -4.0]);
}

#[test]
fn backward_of_sum_of_squares() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_requires_scalar_and_skips_constants() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
    assert!(matches!(g.backward(x), Err(DiffError::NotScalar { .. })));

    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
    let c = g.constant(Tensor::vector(vec![3.0, 4.0]).unwrap()).unwrap();
    let unused = g.param(Tensor::vector(vec![9.0]).unwrap()).unwrap();
    let p = g.mul(x, c).unwrap();
    let loss = g.sum(p).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(unused).unwrap().data(), &[0.0]);
}

#[test]
fn non_finite_values_are_rejected() {
    let mut g = Graph::new();
    assert!(matches!(
        g.leaf(Tensor::vector(vec![f64::NAN]).unwrap(), true),
        Err(DiffError::NonFinite { .. })
    ));
    let x = g.constant(Tensor::vector(vec![1e200]).unwrap()).unwrap();
    assert!(matches!(g.mul(x, x), Err(DiffError::NonFinite { .. })));
}

#[test]
fn tensor_constructor_validates_length() {
    assert!(matches!(Tensor::new(vec![2, 2], vec![1.0; 3]), Err(DiffError::DataLength { .. })));
    assert!(Tensor::new(vec![2, 2], vec![1.0; 4]).is_ok());
}

#[test]
fn dropout_zero_rate_is_identity_and_scales_survivors() {
    let mut rng = crate::rng::stream_rng(1, crate::rng::Stream::Dropout, 0, 0);
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(&[4, 8], 1.0)).unwrap();
    let y = g.dropout(x, 0.0, &mut rng).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());
    let y = g.dropout(x, 0.5, &mut rng).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
    assert!(matches!(g.dropout(x, 1.0, &mut rng), Err(DiffError::InvalidRate { .. })));
}

#[test]
fn every_op_passes_finite_difference_checks() {
    for report in gradcheck::run_suite(None, None).unwrap() {
        assert!(
            report.passed(),
            "{}: relative error {:e} ≥ {:e}",
            report.op,
            report.max_relative_error,
            report.tolerance
        );
    }
}

#[test]
fn gradcheck_helper_agrees_on_a_known_function() {
    // f(a, b) = Σ (a·b)²: independent check of the harness itself.
    let a = random_tensor(&[3], 1, -1.0, 1.0);
    let b = random_tensor(&[3], 2, -1.0, 1.0);
    let errs = check(&[a, b], |g, v| {
        let p = g.mul(v[0], v[1])?;
        let sq = g.mul(p, p)?;
        g.sum(sq)
    })
    .unwrap();
    assert!(errs.iter().all(|&e| e < 1e-8), "{errs:?}");
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let x = random_tensor(&[rows, cols], seed, -50.0, 50.0);
        let s = unary(x, |g, v| g.softmax(v, 1));
        for r in 0..rows {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn matmul_matches_naive_triple_loop(m_ in 1usize..6, k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        let a = random_tensor(&[m_, k], seed, -3.0, 3.0);
        let b = random_tensor(&[k, n], seed ^ 1, -3.0, 3.0);
        let mut g = Graph::new();
        let (av, bv) = (g.constant(a.clone()).unwrap(), g.constant(b.clone()).unwrap());
        let c = g.matmul(av, bv).unwrap();
        for i in 0..m_ {
            for j in 0..n {
                let naive: f64 = (0..k).map(|p| a.get(i, p) * b.get(p, j)).sum();
                prop_assert!((g.value(c).get(i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_gradient_matches_finite_differences(rows in 1usize..4, din in 1usize..5, dout in 1usize..5, seed in any::<u64>()) {
        let x = random_tensor(&[rows, din], seed, -1.0, 1.0);
        let w = random_tensor(&[din, dout], seed ^ 2, -1.0, 1.0);
        let b = random_tensor(&[dout], seed ^ 3, -1.0, 1.0);
        let errs = check(&[x, w, b], |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            weighted_sum(g, y, seed)
        }).unwrap();
        prop_assert!(errs.iter().all(|&e| e < gradcheck::OP_TOLERANCE), "{:?}", errs);
    }

    #[test]
    fn cross_entropy_is_nonnegative(logits in prop::collection::vec(-30.0f64..30.0, 1..10), t in any::<prop::sample::Index>()) {
        let target = t.index(logits.len());
        let mut g = Graph::new();
        let v = g.constant(Tensor::vector(logits).unwrap()).unwrap();
        let l = g.cross_entropy(v, target).unwrap();
        prop_assert!(g.value(l).item() >= 0.0);
    }
}
