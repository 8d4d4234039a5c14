use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn store_with(params: &[(&str, Vec<usize>)], seed: u64) -> (ParamStore, Vec<ParamId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ids = params
        .iter()
        .map(|(name, shape)| store.add_uniform(*name, shape.clone(), 1.0, &mut rng).unwrap())
        .collect();
    (store, ids)
}

/// Scalar probe `Σ_ij out[i,j]·r[j]` with fixed random weights `r`.
fn probe(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var, Error> {
    let cols = g.shape(out).1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rv = g.input_raw(cols, 1, r);
    let m = g.matmul(out, rv)?;
    Ok(g.sum(m))
}

#[test]
fn affine_identity_weights() {
    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap())
        .unwrap();
    let b = store.add_const("b", vec![2], 0.0).unwrap();
    let mut g = Graph::new(&store);
    let x = g.input_raw(1, 2, vec![1.0, 2.0]);
    let (wv, bv) = (g.param(w), g.param(b));
    let y = g.affine(x, wv, bv).unwrap();
    assert_eq!(g.value(y), &[1.0, 2.0]);
}

#[test]
fn affine_hand_sum() {
    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::new(vec![2, 1], vec![2.0, 3.0]).unwrap())
        .unwrap();
    let b = store.add_const("b", vec![1], 1.0).unwrap();
    let mut g = Graph::new(&store);
    let x = g.input_raw(1, 2, vec![1.0, 1.0]);
    let (wv, bv) = (g.param(w), g.param(b));
    let y = g.affine(x, wv, bv).unwrap();
    assert_eq!(g.value(y), &[6.0]);
}

#[test]
fn affine_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut store = ParamStore::new();
    let wid = store.add("w", Tensor::new(vec![4, 2], w.clone()).unwrap()).unwrap();
    let bid = store.add("b", Tensor::new(vec![2], b.clone()).unwrap()).unwrap();
    let mut g = Graph::new(&store);
    let xv = g.input_raw(3, 4, x.clone());
    let (wv, bv) = (g.param(wid), g.param(bid));
    let y = g.affine(xv, wv, bv).unwrap();
    for n in 0..3 {
        for j in 0..2 {
            let mut s = b[j];
            for a in 0..4 {
                s += x[n * 4 + a] * w[a * 2 + j];
            }
            assert!((g.value(y)[n * 2 + j] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn affine_shape_mismatch_names_shapes() {
    let (store, ids) = store_with(&[("w", vec![3, 2]), ("b", vec![2])], 1);
    let mut g = Graph::new(&store);
    let x = g.input_raw(1, 2, vec![1.0, 1.0]);
    let (w, b) = (g.param(ids[0]), g.param(ids[1]));
    let err = g.affine(x, w, b).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Dimension(_)));
    assert!(msg.contains("1x2") && msg.contains("3x2"), "{msg}");
}

#[test]
fn affine_backward_into_input() {
    let (store, ids) = store_with(&[("w", vec![3, 2]), ("b", vec![2])], 2);
    let x = vec![0.3, -0.7, 1.1];
    let build = |g: &mut Graph<'_>, x: &[f64]| {
        let xv = g.input_raw(1, 3, x.to_vec());
        let (w, b) = (g.param(ids[0]), g.param(ids[1]));
        let y = g.affine(xv, w, b).unwrap();
        (xv, probe(g, y, 9).unwrap())
    };
    let mut g = Graph::new(&store);
    let (xv, root) = build(&mut g, &x);
    let bw = g.backward_with_nodes(root).unwrap();
    let dx = bw.wrt(xv).unwrap().to_vec();
    for i in 0..3 {
        let h = 1e-6;
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let mut gp = Graph::new(&store);
        let (_, rp) = build(&mut gp, &xp);
        let mut gm = Graph::new(&store);
        let (_, rm) = build(&mut gm, &xm);
        let fd = (gp.scalar(rp) - gm.scalar(rm)) / (2.0 * h);
        assert!((fd - dx[i]).abs() < 1e-8);
    }
}

#[test]
fn log_softmax_symmetric() {
    let out = kernels::log_softmax_rows(&[0.0, 0.0], 2);
    assert!((out[0] + 2f64.ln()).abs() < 1e-15);
    assert!((out[1] + 2f64.ln()).abs() < 1e-15);
}

#[test]
fn log_softmax_large_magnitude() {
    let out = kernels::log_softmax_rows(&[1000.0, 0.0], 2);
    assert!(out[0].abs() < 1e-12);
    assert!((out[1] + 1000.0).abs() < 1e-9);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn log_softmax_normalizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for scale in [1.0, 10.0, 1000.0] {
        let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-scale..scale)).collect();
        let out = kernels::log_softmax_rows(&x, 7);
        let s: f64 = out.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn log_softmax_rejects_non_finite() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input_raw(1, 2, vec![f64::NAN, 0.0]);
    assert!(matches!(g.log_softmax(x), Err(Error::Numeric(_))));
}

fn layer_norm_of(x: Vec<f64>) -> Vec<f64> {
    let d = x.len();
    let mut store = ParamStore::new();
    let gamma = store.add_const("g", vec![d], 1.0).unwrap();
    let beta = store.add_const("b", vec![d], 0.0).unwrap();
    let mut g = Graph::new(&store);
    let xv = g.input_raw(1, d, x);
    let (gv, bv) = (g.param(gamma), g.param(beta));
    let y = g.layer_norm(xv, gv, bv).unwrap();
    g.value(y).to_vec()
}

#[test]
fn layer_norm_constant_vector_is_zero() {
    assert!(layer_norm_of(vec![3.0; 6]).iter().all(|v| *v == 0.0));
}

#[test]
fn layer_norm_already_normalized() {
    let out = layer_norm_of(vec![1.0, -1.0]);
    assert!((out[0] - 1.0).abs() < 1e-4 && (out[1] + 1.0).abs() < 1e-4);
}

#[test]
fn layer_norm_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let out = layer_norm_of(x);
    let mean = out.iter().sum::<f64>() / 5.0;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
    assert!(mean.abs() < 1e-9);
    assert!((var - 1.0).abs() < 1e-3);
}

#[test]
fn adam_zero_grad_is_identity() {
    let mut p = Parameter::new("p", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    p.accumulate_grad(&[0.0, 0.0, 0.0]);
    adam_step(&mut p, 0.1, &AdamConfig::default()).unwrap();
    assert_eq!(p.value.data(), &[1.0, -2.0, 0.5]);
    assert_eq!(p.step_count, 1);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut p = Parameter::new("p", Tensor::scalar(1.0));
    p.accumulate_grad(&[1.0]);
    adam_step(&mut p, 0.1, &AdamConfig::default()).unwrap();
    // m̂ = v̂ = 1 after bias correction, so the step is lr / (1 + eps).
    assert!((p.value.data()[0] - 0.9).abs() < 1e-8);
    assert_eq!(p.grad().unwrap(), &[0.0]);
}

#[test]
fn adam_constant_grad_decreases_monotonically() {
    let mut p = Parameter::new("p", Tensor::scalar(1.0));
    let mut prev = 1.0;
    for _ in 0..2 {
        p.accumulate_grad(&[0.5]);
        adam_step(&mut p, 0.01, &AdamConfig::default()).unwrap();
        assert!(p.value.data()[0] < prev);
        prev = p.value.data()[0];
    }
    assert_eq!(p.step_count, 2);
}

#[test]
fn adam_rejects_non_positive_lr() {
    let mut p = Parameter::new("p", Tensor::scalar(1.0));
    assert!(matches!(
        adam_step(&mut p, 0.0, &AdamConfig::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn gradcheck_linear_is_exact() {
    let (mut store, ids) = store_with(&[("w", vec![4, 1])], 1);
    let err = check_gradients(&mut store, &ids, GradCheck::default(), |g| {
        let x = g.input_raw(1, 4, vec![0.5, -1.0, 2.0, 0.25]);
        let w = g.param(ids[0]);
        let y = g.matmul(x, w)?;
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn gradcheck_detects_nondeterminism() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let (mut store, ids) = store_with(&[("w", vec![2, 1])], 1);
    let calls = AtomicUsize::new(0);
    let res = check_gradients(&mut store, &ids, GradCheck::default(), |g| {
        let n = calls.fetch_add(1, Ordering::SeqCst) as f64;
        let x = g.input_raw(1, 2, vec![1.0, n]);
        let w = g.param(ids[0]);
        let y = g.matmul(x, w)?;
        Ok(g.sum(y))
    });
    assert!(matches!(res, Err(Error::Determinism(_))));
}

/// Runs a gradient check over a small graph fragment fed by random parameters.
fn check_op(shapes: &[(&str, Vec<usize>)], build: impl Fn(&mut Graph<'_>, &[Var]) -> Var) -> f64 {
    let (mut store, ids) = store_with(shapes, 21);
    let ids2 = ids.clone();
    check_gradients(&mut store, &ids, GradCheck::default(), move |g| {
        let vars: Vec<Var> = ids2.iter().map(|id| g.param(*id)).collect();
        let out = build(g, &vars);
        probe(g, out, 77)
    })
    .unwrap()
}

#[test]
fn op_gradients_match_finite_differences() {
    let cases: Vec<(&str, f64)> = vec![
        ("matmul", check_op(&[("a", vec![3, 4]), ("b", vec![4, 2])], |g, v| g.matmul(v[0], v[1]).unwrap())),
        ("matmul_nt", check_op(&[("a", vec![3, 4]), ("b", vec![5, 4])], |g, v| g.matmul_nt(v[0], v[1]).unwrap())),
        ("affine", check_op(&[("x", vec![3, 4]), ("w", vec![4, 2]), ("b", vec![2])], |g, v| {
            g.affine(v[0], v[1], v[2]).unwrap()
        })),
        ("log_softmax", check_op(&[("x", vec![3, 5])], |g, v| g.log_softmax(v[0]).unwrap())),
        ("softmax", check_op(&[("x", vec![3, 5])], |g, v| g.softmax(v[0]))),
        ("layer_norm", check_op(&[("x", vec![4, 6]), ("g", vec![6]), ("b", vec![6])], |g, v| {
            g.layer_norm(v[0], v[1], v[2]).unwrap()
        })),
        ("relu", check_op(&[("x", vec![4, 3])], |g, v| g.relu(v[0]))),
        ("scale_sub_add", check_op(&[("a", vec![2, 3]), ("b", vec![2, 3])], |g, v| {
            let s = g.scale(v[0], 1.7);
            let d = g.sub(s, v[1]).unwrap();
            g.add(d, v[0]).unwrap()
        })),
        ("gather", check_op(&[("t", vec![5, 3])], |g, v| g.gather(v[0], &[4, 0, 4, 2]).unwrap())),
        ("concat_slice", check_op(&[("a", vec![3, 2]), ("b", vec![3, 4])], |g, v| {
            let c = g.concat_cols(&[v[0], v[1]]).unwrap();
            g.slice_cols(c, 1, 4).unwrap()
        })),
        ("row_mix", check_op(&[("x", vec![5, 3])], |g, v| {
            let mix = Arc::new(RowMix::linear(5, 9, |j| j as f64 * 0.55));
            g.row_mix(v[0], mix).unwrap()
        })),
        ("col_mask", check_op(&[("x", vec![3, 4])], |g, v| {
            g.col_mask(v[0], vec![true, false, true, true]).unwrap()
        })),
        ("pair_add", check_op(&[("a", vec![3, 4]), ("b", vec![2, 4])], |g, v| g.pair_add(v[0], v[1]).unwrap())),
        ("depthwise_conv", check_op(&[("x", vec![7, 3]), ("k", vec![5, 3]), ("b", vec![3])], |g, v| {
            g.depthwise_conv(v[0], v[1], v[2]).unwrap()
        })),
        ("rnnt", check_op(&[("x", vec![6, 4])], |g, v| {
            let lp = g.log_softmax(v[0]).unwrap();
            let l = g.rnnt_loss(lp, 3, &[2], 0).unwrap();
            let l2 = g.scale(l, 0.5);
            g.add_scalars(&[l, l2])
        })),
    ];
    for (name, err) in cases {
        assert!(err < 1e-6, "{name}: relative error {err}");
    }
}

#[test]
fn gradients_accumulate_across_uses() {
    // A parameter used twice receives the sum of both contributions.
    let (store, ids) = store_with(&[("w", vec![1, 1])], 4);
    let mut g = Graph::new(&store);
    let w1 = g.param(ids[0]);
    let w2 = g.param(ids[0]);
    let s = g.add(w1, w2).unwrap();
    let root = g.sum(s);
    let bw = g.backward(root).unwrap();
    assert_eq!(bw.params.get(ids[0]).unwrap(), &[2.0]);
}

#[test]
fn row_mix_pool_then_repeat_shapes() {
    let pool = RowMix::mean_pool(7, 2);
    assert_eq!(pool.n_out(), 4);
    let up = RowMix::repeat(4, 2, 7);
    assert_eq!(up.n_out(), 7);
    let x: Vec<f64> = (0..7).map(|v| v as f64).collect();
    let pooled = pool.apply(&x, 1);
    assert_eq!(pooled, vec![0.5, 2.5, 4.5, 6.0]);
}
