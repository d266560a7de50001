use super::*;
use proptest::prelude::*;

fn arr(shape: &[usize], data: &[f64]) -> Array<f64> {
    Array::from_f64(shape, data).unwrap()
}

#[test]
fn matmul_identity_is_noop() {
    let mut t = Tape::new();
    let i = t.constant(Array::identity(2)).unwrap();
    let a = t.constant(arr(&[2, 2], &[1.5, -2.0, 0.25, 7.0])).unwrap();
    let p = t.matmul(i, a).unwrap();
    assert_eq!(t.value(p), t.value(a));
}

#[test]
fn softmax_closed_forms() {
    let mut t = Tape::new();
    let x = t.constant(arr(&[2], &[0.0, 0.0])).unwrap();
    let s = t.softmax_lastdim(x).unwrap();
    assert_eq!(t.value(s).data(), &[0.5, 0.5]);

    let y = t.constant(arr(&[2], &[2f64.ln(), 0.0])).unwrap();
    let s = t.softmax_lastdim(y).unwrap();
    let v = t.value(s).data();
    assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((v[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn layer_norm_two_values() {
    let mut t = Tape::new();
    let x = t.constant(arr(&[1, 2], &[1.0, 3.0])).unwrap();
    let g = t.constant(arr(&[2], &[1.0, 1.0])).unwrap();
    let b = t.constant(arr(&[2], &[0.0, 0.0])).unwrap();
    let y = t.layer_norm(x, g, b, 0.0).unwrap();
    assert_eq!(t.value(y).data(), &[-1.0, 1.0]);
}

#[test]
fn mean_abs_gradient_is_sign_over_n() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[2.0, -3.0])).unwrap();
    let a = t.abs(x).unwrap();
    let l = t.mean(a).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.5, -0.5]);
}

#[test]
fn abs_subgradient_at_zero_is_zero() {
    let mut t = Tape::new();
    let x = t.param(arr(&[3], &[0.0, 1.0, -1.0])).unwrap();
    let a = t.abs(x).unwrap();
    let l = t.sum(a).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, -1.0]);
}

#[test]
fn constant_loss_gives_zero_gradients() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[1.0, 2.0])).unwrap();
    let c = t.constant(Array::scalar(4.0)).unwrap();
    let g = t.backward(c).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
    assert!(g.get(c).is_none());
}

#[test]
fn half_sum_of_squares_gradient() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[1.0, 2.0])).unwrap();
    let sq = t.mul(x, x).unwrap();
    let s = t.sum(sq).unwrap();
    let l = t.scale(s, 0.5).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[1.0, 2.0])).unwrap();
    let c = t.constant(arr(&[2], &[3.0, 4.0])).unwrap();
    let p = t.mul(x, c).unwrap();
    let l = t.sum(p).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
    assert!(g.get(c).is_none());
    assert!(g.get(p).is_none());
}

#[test]
fn non_scalar_loss_rejected() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[1.0, 2.0])).unwrap();
    assert!(matches!(t.backward(x), Err(GradError::NonScalarLoss(_))));
}

#[test]
fn shape_errors() {
    let mut t = Tape::new();
    let a = t.constant(Array::<f64>::zeros(&[2, 3])).unwrap();
    let b = t.constant(Array::zeros(&[2, 3])).unwrap();
    assert!(matches!(t.matmul(a, b), Err(GradError::ShapeMismatch(_))));
    let c = t.constant(Array::zeros(&[2])).unwrap();
    assert!(t.add(a, c).is_err());
    assert!(t.slice(a, 1, 2, 2).is_err());
    assert!(Array::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn non_finite_leaf_rejected() {
    let mut t = Tape::<f64>::new();
    assert_eq!(
        t.param(Array::vector(vec![1.0, f64::NAN])),
        Err(GradError::NonFiniteInput)
    );
    assert_eq!(
        t.constant(Array::vector(vec![f64::INFINITY])),
        Err(GradError::NonFiniteInput)
    );
}

#[test]
fn grad_check_quadratic_and_linear() {
    let x = arr(&[3], &[0.3, -1.2, 2.0]);
    let quad = grad_check(
        |t, x| {
            let sq = t.mul(x, x)?;
            let s = t.sum(sq)?;
            t.scale(s, 1.5)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(quad < 1e-7, "quadratic rel err {quad}");

    let w = arr(&[3], &[0.5, 0.25, -2.0]);
    let lin = grad_check(
        move |t, x| {
            let c = t.constant(w.clone())?;
            let p = t.mul(x, c)?;
            t.sum(p)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(lin < 1e-9, "linear rel err {lin}");
}

#[test]
fn slice_concat_reshape_transpose_values() {
    let mut t = Tape::new();
    let a = t
        .constant(arr(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
        .unwrap();
    let s = t.slice(a, 1, 1, 2).unwrap();
    assert_eq!(t.value(s).data(), &[2.0, 3.0, 5.0, 6.0]);
    let c = t.concat(&[s, a], 1).unwrap();
    assert_eq!(t.value(c).shape(), &[2, 5]);
    assert_eq!(
        t.value(c).data(),
        &[2.0, 3.0, 1.0, 2.0, 3.0, 5.0, 6.0, 4.0, 5.0, 6.0]
    );
    let tr = t.transpose(a).unwrap();
    assert_eq!(t.value(tr).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let r = t.reshape(a, &[3, 2]).unwrap();
    assert_eq!(t.value(r).shape(), &[3, 2]);
}

#[test]
fn tape_replays_identically() {
    let run = || {
        let mut t = Tape::new();
        let x = t.param(arr(&[2, 2], &[0.1, 0.7, -0.3, 0.2])).unwrap();
        let w = t.param(arr(&[2, 2], &[1.1, -0.4, 0.9, 0.3])).unwrap();
        let h = t.matmul(x, w).unwrap();
        let s = t.softmax_lastdim(h).unwrap();
        let l = t.mean(s).unwrap();
        assert!(x.index() < h.index() && h.index() < l.index());
        let g = t.backward(l).unwrap();
        (t.value(l).data()[0].to_bits(), g.get(w).unwrap().clone())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

fn small_array(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array<f64>> {
    array_with_cols(max_rows, 1, max_cols)
}

fn array_with_cols(max_rows: usize, min_cols: usize, max_cols: usize) -> impl Strategy<Value = Array<f64>> {
    (1..=max_rows, min_cols..=max_cols).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-2.0f64..2.0, r * c)
            .prop_map(move |v| Array::from_f64(&[r, c], &v).unwrap())
    })
}

// Moves entries away from the kinks of relu/abs so central differences are valid.
fn nudge(a: &Array<f64>) -> Array<f64> {
    a.map(|x| if x.abs() < 0.05 { x.signum().max(0.0) * 0.2 + 0.1 } else { x })
}

fn weights_like(a: &Array<f64>) -> Array<f64> {
    let data: Vec<f64> = (0..a.len()).map(|i| ((i as f64) * 0.37).sin() + 0.3).collect();
    Array::new(a.shape().to_vec(), data).unwrap()
}

// Contracts an arbitrary-shaped output with fixed weights to obtain a scalar,
// so the check exercises the full Jacobian rather than its column sums.
fn contract(t: &mut Tape<f64>, y: NodeId) -> Result<NodeId, GradError> {
    let w = weights_like(t.value(y));
    let c = t.constant(w)?;
    let p = t.mul(y, c)?;
    t.sum(p)
}

const PRIM_TOL: f64 = 1e-6;
// Ops that are linear in every single entry have exact central differences,
// so a wide step only trades away roundoff.
const LINEAR_STEP: f64 = 1e-2;
const SMOOTH_STEP: f64 = 1e-3;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_gradients(a in small_array(4, 4), cols in 1usize..=4) {
        let k = a.shape()[1];
        let b = Array::from_f64(&[k, cols], &(0..k * cols).map(|i| (i as f64 * 0.71).cos()).collect::<Vec<_>>()).unwrap();
        let err = grad_check_many(|t, ids| { let y = t.matmul(ids[0], ids[1])?; contract(t, y) }, &[a, b], LINEAR_STEP).unwrap();
        prop_assert!(err < PRIM_TOL, "{}", err);
    }

    #[test]
    fn batched_matmul_gradients(v in proptest::collection::vec(-2.0f64..2.0, 2 * 3 * 4)) {
        let a = Array::from_f64(&[2, 3, 4], &v).unwrap();
        let b = Array::from_f64(&[2, 4, 2], &v[..16]).unwrap();
        let err = grad_check_many(|t, ids| { let y = t.matmul(ids[0], ids[1])?; contract(t, y) }, &[a, b], LINEAR_STEP).unwrap();
        prop_assert!(err < PRIM_TOL, "{}", err);
    }

    #[test]
    fn add_sub_mul_broadcast_gradients(a in small_array(4, 4)) {
        let c = a.shape()[1];
        let bias = Array::from_f64(&[c], &(0..c).map(|i| 0.5 - i as f64 * 0.3).collect::<Vec<_>>()).unwrap();
        for which in 0..3 {
            let err = grad_check_many(|t, ids| {
                let y = match which {
                    0 => t.add(ids[0], ids[1])?,
                    1 => t.sub(ids[0], ids[1])?,
                    _ => t.mul(ids[0], ids[1])?,
                };
                contract(t, y)
            }, &[a.clone(), bias.clone()], LINEAR_STEP).unwrap();
            prop_assert!(err < PRIM_TOL, "op {} err {}", which, err);
        }
    }

    #[test]
    fn elementwise_gradients(a in small_array(4, 4)) {
        let a = nudge(&a);
        for which in 0..3 {
            let err = grad_check(|t, x| {
                let y = match which {
                    0 => t.relu(x)?,
                    1 => t.abs(x)?,
                    _ => t.scale(x, -1.7)?,
                };
                contract(t, y)
            }, &a, LINEAR_STEP).unwrap();
            prop_assert!(err < PRIM_TOL, "op {} err {}", which, err);
        }
    }

    #[test]
    fn softmax_gradients_and_row_sums(a in small_array(4, 4)) {
        let err = grad_check(|t, x| { let y = t.softmax_lastdim(x)?; contract(t, y) }, &a, SMOOTH_STEP).unwrap();
        prop_assert!(err < PRIM_TOL, "{}", err);

        let mut t = Tape::new();
        let x = t.constant(a.clone()).unwrap();
        let s = t.softmax_lastdim(x).unwrap();
        for row in t.value(s).data().chunks(a.shape()[1]) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_gradients_and_moments(a in array_with_cols(4, 3, 4)) {
        let d = a.shape()[1];
        let spread = a.data().chunks(d).all(|r| {
            let mx = r.iter().cloned().fold(f64::MIN, f64::max);
            let mn = r.iter().cloned().fold(f64::MAX, f64::min);
            mx - mn > 0.1
        });
        prop_assume!(spread);
        let gamma = Array::from_f64(&[d], &(0..d).map(|i| 1.0 + 0.2 * i as f64).collect::<Vec<_>>()).unwrap();
        let beta = Array::from_f64(&[d], &(0..d).map(|i| 0.1 * i as f64).collect::<Vec<_>>()).unwrap();
        let err = grad_check_many(|t, ids| { let y = t.layer_norm(ids[0], ids[1], ids[2], 1e-5)?; contract(t, y) }, &[a.clone(), gamma, beta], SMOOTH_STEP).unwrap();
        prop_assert!(err < PRIM_TOL, "{}", err);

        let mut t = Tape::new();
        let x = t.constant(a.clone()).unwrap();
        let g = t.constant(Array::filled(&[d], 1.0)).unwrap();
        let b = t.constant(Array::zeros(&[d])).unwrap();
        let y = t.layer_norm(x, g, b, 0.0).unwrap();
        for row in t.value(y).data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn structural_gradients(a in small_array(4, 4)) {
        let (r, c) = (a.shape()[0], a.shape()[1]);
        let err = grad_check(|t, x| {
            let tr = t.transpose(x)?;
            let rs = t.reshape(tr, &[r * c])?;
            let back = t.reshape(rs, &[r, c])?;
            let s = t.slice(back, 1, 0, (c + 1) / 2)?;
            let cat = t.concat(&[s, x], 1)?;
            let y = contract(t, cat)?;
            let m = t.mean(x)?;
            t.add(y, m)
        }, &a, LINEAR_STEP).unwrap();
        prop_assert!(err < PRIM_TOL, "{}", err);
    }
}
