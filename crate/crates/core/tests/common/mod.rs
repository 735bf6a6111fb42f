//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use epnet::autodiff::{Graph, Var};
use epnet::Tensor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Minimizes `½‖Ax − b‖² + λ‖x‖₁` by cyclic coordinate descent.
pub fn coordinate_descent(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let col_sq: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let mut x = DVector::<f64>::zeros(n);
    let mut r = b.clone();
    for _ in 0..200_000 {
        let mut moved: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho = a.column(j).dot(&r) + col_sq[j] * x[j];
            let next = rho.signum() * (rho.abs() - lambda).max(0.0) / col_sq[j];
            let delta = next - x[j];
            if delta != 0.0 {
                r.axpy(-delta, &a.column(j), 1.0);
                x[j] = next;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    let obj = 0.5 * (a * &x - b).norm_squared() + lambda * x.lp_norm(1);
    (x, obj)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting on plain
/// row vectors.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, s)| r.iter().chain(s).copied().collect()).collect();
    let width = m[0].len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..width {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n..].iter().map(|v| v / m[i][i]).collect()).collect()
}

/// Zero-padded "same" cross-correlation with odd square kernels.
pub fn conv_naive(input: &Tensor, kernel: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (co, ci, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    assert_eq!(c, ci);
    let pad = (k / 2) as isize;
    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for yy in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for i in 0..ci {
                    for dy in 0..k {
                        for dx in 0..k {
                            let sy = yy as isize + dy as isize - pad;
                            let sx = xx as isize + dx as isize - pad;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            s += kd[((o * ci + i) * k + dy) * k + dx] * x[(i * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(o * h + yy) * w + xx] = s;
            }
        }
    }
    Tensor::new([co, h, w], out).unwrap()
}

pub fn relu_naive(t: &Tensor) -> Tensor {
    t.map(|v| v.max(0.0))
}

/// Position-by-position embedded-Gaussian response and weights:
/// `ω_ij = exp(aᵢ·bⱼ) / Σ_k exp(aᵢ·b_k)`, `vᵢ = Σ_j ω_ij pⱼ`, output
/// `ReLU(C [z; v])`.
pub fn nonlocal_naive(
    z: &Tensor,
    w_alpha: &Tensor,
    w_beta: &Tensor,
    w_phi: &Tensor,
    combine: &Tensor,
) -> (Tensor, Vec<Vec<f64>>) {
    let (nf, h, w) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let n = h * w;
    let feature = |kern: &Tensor, pos: usize| -> Vec<f64> {
        let rows = kern.shape()[0];
        (0..rows)
            .map(|r| (0..nf).map(|c| kern.data()[r * nf + c] * z.data()[c * n + pos]).sum())
            .collect()
    };
    let mut omega = vec![vec![0.0; n]; n];
    let mut v = vec![vec![0.0; nf]; n];
    for i in 0..n {
        let ai = feature(w_alpha, i);
        let logits: Vec<f64> = (0..n)
            .map(|j| ai.iter().zip(feature(w_beta, j)).map(|(p, q)| p * q).sum())
            .collect();
        let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - peak).exp()).sum();
        for j in 0..n {
            omega[i][j] = (logits[j] - peak).exp() / total;
            let pj = feature(w_phi, j);
            for c in 0..nf {
                v[i][c] += omega[i][j] * pj[c];
            }
        }
    }
    let mut out = vec![0.0; nf * n];
    for o in 0..nf {
        for i in 0..n {
            let mut s = 0.0;
            for c in 0..nf {
                s += combine.data()[o * 2 * nf + c] * z.data()[c * n + i];
                s += combine.data()[o * 2 * nf + nf + c] * v[i][c];
            }
            out[o * n + i] = s.max(0.0);
        }
    }
    (Tensor::new([nf, h, w], out).unwrap(), omega)
}

/// Finite-difference tolerance used throughout: `|fd − an| ≤ 1e-4·max(|fd|, |an|) + 1e-8`.
pub fn fd_ok(fd: f64, an: f64) -> bool {
    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-8
}

/// Checks the gradient of `build(graph, inputs) -> scalar` with respect to
/// every coordinate of every input by central differences with step 1e-5.
/// Returns the number of coordinates checked and a description of the first
/// failure, if any.
pub fn check_graph_gradient(
    inputs: &[Tensor],
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
) -> (usize, Option<String>) {
    let eval = |vals: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    let grads: Vec<Tensor> = vars.iter().map(|&v| g.grad_or_zero(v)).collect();
    let h = 1e-5;
    let mut checked = 0;
    for (t, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[t].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[t].data_mut()[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let an = grads[t].data()[i];
            checked += 1;
            if !fd_ok(fd, an) {
                return (checked, Some(format!("input {t} coordinate {i}: fd {fd:e} vs analytic {an:e}")));
            }
        }
    }
    (checked, None)
}

/// Reduces a tensor node to a scalar with fixed random weights so that every
/// output coordinate contributes a distinct gradient.
pub fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let len = g.value(v).len();
    let w = g.constant(random_tensor(&[len], seed).reshape(shape).unwrap());
    let flat_v = g.reshape(v, [1, len]).unwrap();
    let flat_w = g.reshape(w, [len, 1]).unwrap();
    let prod = g.matmul(flat_v, flat_w).unwrap();
    g.sum(prod)
}
