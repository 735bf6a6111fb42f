mod common;

use common::{check_graph_gradient, conv_naive, random_tensor, weighted_sum};
use epnet::autodiff::{Graph, Var};
use epnet::Tensor;
use proptest::prelude::*;

fn assert_fd(name: &str, inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[Var]) -> Var) {
    let (checked, failure) = check_graph_gradient(inputs, build);
    assert!(failure.is_none(), "{name}: {}", failure.unwrap());
    assert!(checked > 0);
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let a = random_tensor(&[2, 3, 4], 1);
    let b = random_tensor(&[2, 3, 4], 2);
    assert_fd("add", &[a.clone(), b.clone()], &|g, v| {
        let s = g.add(v[0], v[1]).unwrap();
        weighted_sum(g, s, 9)
    });
    assert_fd("sub", &[a.clone(), b.clone()], &|g, v| {
        let s = g.sub(v[0], v[1]).unwrap();
        weighted_sum(g, s, 9)
    });
    assert_fd("scale", std::slice::from_ref(&a), &|g, v| {
        let s = g.scale(v[0], -1.7);
        weighted_sum(g, s, 9)
    });
    assert_fd("scalar_mul", &[Tensor::new([1], vec![0.3]).unwrap(), a.clone()], &|g, v| {
        let s = g.scalar_mul(v[0], v[1]).unwrap();
        weighted_sum(g, s, 9)
    });
    assert_fd("relu", std::slice::from_ref(&a), &|g, v| {
        let s = g.relu(v[0]);
        weighted_sum(g, s, 9)
    });
    assert_fd("sum_squares", std::slice::from_ref(&a), &|g, v| g.sum_squares(v[0]));
    assert_fd("sum", std::slice::from_ref(&a), &|g, v| {
        let s = g.relu(v[0]);
        g.sum(s)
    });
}

#[test]
fn soft_threshold_matches_finite_differences() {
    let x = random_tensor(&[3, 4, 4], 3);
    let theta = Tensor::new([3], vec![0.05, 0.2, 0.41]).unwrap();
    assert_fd("soft_threshold", &[x, theta], &|g, v| {
        let s = g.soft_threshold(v[0], v[1]).unwrap();
        weighted_sum(g, s, 4)
    });
}

#[test]
fn conv2d_matches_finite_differences() {
    let x = random_tensor(&[2, 5, 4], 5);
    let k = random_tensor(&[3, 2, 3, 3], 6);
    assert_fd("conv2d 3x3", &[x.clone(), k], &|g, v| {
        let s = g.conv2d(v[0], v[1]).unwrap();
        weighted_sum(g, s, 7)
    });
    let k1 = random_tensor(&[4, 2, 1, 1], 8);
    assert_fd("conv2d 1x1", &[x, k1], &|g, v| {
        let s = g.conv2d(v[0], v[1]).unwrap();
        weighted_sum(g, s, 7)
    });
}

#[test]
fn matrix_ops_match_finite_differences() {
    let a = random_tensor(&[3, 4], 10);
    let b = random_tensor(&[4, 5], 11);
    assert_fd("matmul", &[a.clone(), b], &|g, v| {
        let s = g.matmul(v[0], v[1]).unwrap();
        weighted_sum(g, s, 12)
    });
    assert_fd("transpose", std::slice::from_ref(&a), &|g, v| {
        let s = g.transpose(v[0]).unwrap();
        weighted_sum(g, s, 12)
    });
    assert_fd("softmax_rows", std::slice::from_ref(&a), &|g, v| {
        let s = g.softmax_rows(v[0]).unwrap();
        weighted_sum(g, s, 13)
    });
    assert_fd("reshape", &[a], &|g, v| {
        let s = g.reshape(v[0], [2, 6]).unwrap();
        weighted_sum(g, s, 14)
    });
    let p = random_tensor(&[2, 3, 3], 15);
    let q = random_tensor(&[3, 3, 3], 16);
    assert_fd("concat_channels", &[p, q], &|g, v| {
        let s = g.concat_channels(v[0], v[1]).unwrap();
        weighted_sum(g, s, 17)
    });
}

#[test]
fn conv2d_matches_nested_loops() {
    for (seed, shape, kshape) in [
        (1, [1, 7, 5], [4, 1, 3, 3]),
        (2, [3, 6, 6], [2, 3, 3, 3]),
        (3, [4, 33, 33], [4, 4, 3, 3]),
        (4, [5, 4, 9], [3, 5, 1, 1]),
    ] {
        let x = random_tensor(&shape, seed);
        let k = random_tensor(&kshape, seed + 100);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(k.clone());
        let out = g.conv2d(xv, kv).unwrap();
        let diff = g.value(out).max_abs_diff(&conv_naive(&x, &k)).unwrap();
        assert!(diff < 1e-12, "shape {shape:?}: {diff:e}");
    }
}

fn conv_value(x: &Tensor, k: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let kv = g.constant(k.clone());
    let out = g.conv2d(xv, kv).unwrap();
    g.value(out).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear_in_input(seed in 0u64..1000, c in 0.1f64..3.0) {
        let x = random_tensor(&[2, 5, 6], seed);
        let y = random_tensor(&[2, 5, 6], seed + 1);
        let k = random_tensor(&[3, 2, 3, 3], seed + 2);
        let lhs = conv_value(&x.scale(c).add(&y).unwrap(), &k);
        let rhs = conv_value(&x, &k).scale(c).add(&conv_value(&y, &k)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn conv_input_gradient_is_the_adjoint(seed in 0u64..1000) {
        // <conv(x), u> = <x, convᵀ(u)> where convᵀ(u) is the input gradient.
        let x = random_tensor(&[2, 4, 7], seed);
        let u = random_tensor(&[3, 4, 7], seed + 1);
        let k = random_tensor(&[3, 2, 3, 3], seed + 2);
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let kv = g.constant(k.clone());
        let out = g.conv2d(xv, kv).unwrap();
        let uv = g.constant(u.clone());
        let len = u.len();
        let a = g.reshape(out, [1, len]).unwrap();
        let b = g.reshape(uv, [len, 1]).unwrap();
        let ip = g.matmul(a, b).unwrap();
        let s = g.sum(ip);
        g.backward(s).unwrap();
        let lhs = conv_value(&x, &k).dot(&u).unwrap();
        let rhs = x.dot(&g.grad_or_zero(xv)).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn softmax_rows_are_distributions(seed in 0u64..1000, scale in 0.1f64..50.0) {
        let a = random_tensor(&[4, 6], seed).scale(scale);
        let mut g = Graph::new();
        let av = g.constant(a);
        let s = g.softmax_rows(av).unwrap();
        for row in g.value(s).data().chunks(6) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn soft_threshold_is_shrinkage(v in -5.0f64..5.0, t in 0.0f64..2.0) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new([1, 1, 1], vec![v]).unwrap());
        let th = g.constant(Tensor::new([1], vec![t]).unwrap());
        let s = g.soft_threshold(x, th).unwrap();
        let out = g.value(s).data()[0];
        prop_assert!(out.abs() <= v.abs());
        prop_assert!((v - out).abs() <= t + 1e-15);
        if v.abs() <= t { prop_assert_eq!(out, 0.0); }
    }
}
