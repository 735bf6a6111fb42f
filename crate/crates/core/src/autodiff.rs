//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node appended after its parents,
//! so node order is already a topological order and the backward sweep is a
//! single reverse pass over the tape.

use std::sync::Arc;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    ScalarMul { scalar: Var, input: Var },
    Conv2d { input: Var, kernel: Var },
    Relu(Var),
    SoftThreshold { input: Var, thresholds: Var },
    MatMul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Concat(Var, Var),
    Reshape(Var),
    Sum(Var),
    SumSquares(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::ScalarMul { .. } => "scalar_mul",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu(_) => "relu",
            Op::SoftThreshold { .. } => "soft_threshold",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Concat(..) => "concat_channels",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::SumSquares(_) => "sum_squares",
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Computation tape. One graph per forward evaluation; graphs are independent
/// and may be built concurrently on separate threads.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Arc::new(value), Op::Leaf, true)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Arc::new(value), Op::Leaf, false)
    }

    /// Constant leaf sharing storage with the caller.
    pub fn constant_shared(&mut self, value: Arc<Tensor>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of the last backward pass(es), if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of `v`, or zeros of its shape when nothing reached it.
    pub fn grad_or_zero(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Arc::new(value), op, requires_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.derived(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.derived(out, Op::Sub(a, b), &[a, b]))
    }

    /// Multiplication by a fixed real.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        self.derived(out, Op::Scale(a, c), &[a])
    }

    /// Multiplication by a one-element tensor that may itself be learnable.
    pub fn scalar_mul(&mut self, scalar: Var, input: Var) -> Result<Var> {
        let s = self.value(scalar).item()?;
        let out = self.value(input).scale(s);
        Ok(self.derived(out, Op::ScalarMul { scalar, input }, &[scalar, input]))
    }

    /// Zero-padded, stride-1, bias-free 2-D correlation preserving spatial size.
    pub fn conv2d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let out = conv2d_forward(self.value(input), self.value(kernel))?;
        Ok(self.derived(out, Op::Conv2d { input, kernel }, &[input, kernel]))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = self.value(input).map(|v| v.max(0.0));
        self.derived(out, Op::Relu(input), &[input])
    }

    /// Channel-wise shrinkage `sign(x) * max(|x| - |theta_c|, 0)`.
    pub fn soft_threshold(&mut self, input: Var, thresholds: Var) -> Result<Var> {
        let out = soft_threshold_forward(self.value(input), self.value(thresholds))?;
        Ok(self.derived(
            out,
            Op::SoftThreshold { input, thresholds },
            &[input, thresholds],
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(self.value(a), self.value(b))?;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.derived(out, Op::Transpose(a), &[a]))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = softmax_rows(self.value(a))?;
        Ok(self.derived(out, Op::SoftmaxRows(a), &[a]))
    }

    /// Stacks `a`'s channels followed by `b`'s.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.value(a).dims3()?;
        let (cb, hb, wb) = self.value(b).dims3()?;
        if (ha, wa) != (hb, wb) {
            return shape_err(format!(
                "concat_channels: spatial size {ha}x{wa} vs {hb}x{wb}"
            ));
        }
        let mut data = Vec::with_capacity((ca + cb) * ha * wa);
        data.extend_from_slice(self.value(a).data());
        data.extend_from_slice(self.value(b).data());
        let out = Tensor::new([ca + cb, ha, wa], data)?;
        Ok(self.derived(out, Op::Concat(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.derived(out, Op::Reshape(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.derived(out, Op::Sum(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.dot(v).expect("same tensor"));
        self.derived(out, Op::SumSquares(a), &[a])
    }

    /// Reverse sweep from a scalar node. Gradients accumulate into every
    /// reachable node that requires them; call [`Graph::zero_grad`] between
    /// independent passes.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            ));
        }
        let mut pending: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Tensor::ones(self.value(loss).shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (parent, contribution) in self.local_grads(i, &op, &g)? {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut pending[parent.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, index: usize, op: &Op, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((a, g.clone()));
                out.push((b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((a, g.clone()));
                if self.wants(b) {
                    out.push((b, g.scale(-1.0)));
                }
            }
            Op::Scale(a, c) => out.push((a, g.scale(c))),
            Op::ScalarMul { scalar, input } => {
                if self.wants(scalar) {
                    let s = g.dot(self.value(input))?;
                    out.push((scalar, Tensor::new(self.value(scalar).shape(), vec![s])?));
                }
                if self.wants(input) {
                    out.push((input, g.scale(self.value(scalar).item()?)));
                }
            }
            Op::Conv2d { input, kernel } => {
                if self.wants(input) {
                    out.push((input, conv2d_backward_input(g, self.value(kernel))?));
                }
                if self.wants(kernel) {
                    out.push((
                        kernel,
                        conv2d_backward_kernel(g, self.value(input), self.value(kernel).shape())?,
                    ));
                }
            }
            Op::Relu(a) => {
                let x = self.value(a);
                out.push((a, x.zip_map(g, |x, g| if x > 0.0 { g } else { 0.0 })?));
            }
            Op::SoftThreshold { input, thresholds } => {
                let (gx, gt) =
                    soft_threshold_backward(g, self.value(input), self.value(thresholds))?;
                out.push((input, gx));
                out.push((thresholds, gt));
            }
            Op::MatMul(a, b) => {
                if self.wants(a) {
                    out.push((a, matmul_a_bt(g, self.value(b))?));
                }
                if self.wants(b) {
                    out.push((b, matmul_at_b(self.value(a), g)?));
                }
            }
            Op::Transpose(a) => out.push((a, g.transpose()?)),
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[index].value;
                out.push((a, softmax_rows_backward(y, g)?));
            }
            Op::Concat(a, b) => {
                let split = self.value(a).len();
                let data = g.data();
                out.push((
                    a,
                    Tensor::new(self.value(a).shape(), data[..split].to_vec())?,
                ));
                out.push((
                    b,
                    Tensor::new(self.value(b).shape(), data[split..].to_vec())?,
                ));
            }
            Op::Reshape(a) => out.push((a, g.reshape(self.value(a).shape())?)),
            Op::Sum(a) => {
                let s = g.item()?;
                out.push((a, Tensor::full(self.value(a).shape(), s)));
            }
            Op::SumSquares(a) => {
                let s = g.item()?;
                out.push((a, self.value(a).scale(2.0 * s)));
            }
        }
        Ok(out)
    }
}

fn conv_dims(input: &Tensor, kernel: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (cin, h, w) = input.dims3()?;
    let [cout, kcin, kh, kw] = kernel.shape()[..] else {
        return shape_err(format!(
            "conv2d kernel must be rank-4 [Cout, Cin, k, k], got {:?}",
            kernel.shape()
        ));
    };
    if kh != kw || !(kh == 1 || kh == 3) {
        return shape_err(format!("conv2d kernel size must be 1x1 or 3x3, got {kh}x{kw}"));
    }
    if kcin != cin {
        return shape_err(format!(
            "conv2d input channels: kernel expects Cin={kcin}, input has {cin}"
        ));
    }
    Ok((cin, cout, h, w, kh))
}

// The convolutions work on zero-padded planes of width `w + 2·pad` stored
// flat. Output position (y, x) lives at `y·wp + x` of a "wide" plane, so every
// kernel tap is one contiguous axpy of length `span` starting at offset
// `dy·wp + dx` of the padded input. The two surplus columns per row are junk
// and are dropped (forward) or held at zero (backward).

struct Layout {
    h: usize,
    w: usize,
    pad: usize,
    wp: usize,
    span: usize,
}

impl Layout {
    fn new(h: usize, w: usize, k: usize) -> Self {
        let pad = k / 2;
        let wp = w + 2 * pad;
        Self {
            h,
            w,
            pad,
            wp,
            span: (h * wp).saturating_sub(2 * pad),
        }
    }

    fn padded_len(&self) -> usize {
        (self.h + 2 * self.pad) * self.wp
    }

    fn offset(&self, dy: usize, dx: usize) -> usize {
        dy * self.wp + dx
    }

    /// Copies a `[h, w]` plane into the interior of a padded plane.
    fn pad_into(&self, src: &[f64], dst: &mut [f64]) {
        for y in 0..self.h {
            let d = (y + self.pad) * self.wp + self.pad;
            dst[d..d + self.w].copy_from_slice(&src[y * self.w..(y + 1) * self.w]);
        }
    }
}

const BLOCK: usize = 16;
const LANES: usize = 4;

pub(crate) fn conv2d_forward(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (cin, cout, h, w, k) = conv_dims(input, kernel)?;
    let l = Layout::new(h, w, k);
    let x = input.data();
    let kd = kernel.data();
    let plane = h * w;
    let plen = l.padded_len();
    let mut padded = vec![0.0; cin * plen];
    for ci in 0..cin {
        l.pad_into(&x[ci * plane..(ci + 1) * plane], &mut padded[ci * plen..(ci + 1) * plen]);
    }
    let taps: Vec<usize> = (0..k * k).map(|t| l.offset(t / k, t % k)).collect();
    let mut wide = vec![0.0; l.span];
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let kc = &kd[co * cin * k * k..(co + 1) * cin * k * k];
        // Register-sized blocks of output positions, accumulated over every
        // input channel and tap before being stored.
        let mut j = 0;
        while j < l.span {
            let len = BLOCK.min(l.span - j);
            let mut acc = [0.0; BLOCK];
            for ci in 0..cin {
                let src = &padded[ci * plen..(ci + 1) * plen];
                for (t, &off) in taps.iter().enumerate() {
                    let wgt = kc[ci * k * k + t];
                    if len == BLOCK {
                        let s: &[f64; BLOCK] = src[off + j..off + j + BLOCK].try_into().expect("block");
                        for i in 0..BLOCK {
                            acc[i] += wgt * s[i];
                        }
                    } else {
                        for (a, &v) in acc.iter_mut().zip(&src[off + j..off + j + len]) {
                            *a += wgt * v;
                        }
                    }
                }
            }
            wide[j..j + len].copy_from_slice(&acc[..len]);
            j += len;
        }
        let out_c = &mut out[co * plane..(co + 1) * plane];
        for y in 0..h {
            out_c[y * w..(y + 1) * w].copy_from_slice(&wide[y * l.wp..y * l.wp + w]);
        }
    }
    Tensor::new([cout, h, w], out)
}

/// Kernel of the adjoint convolution: channels swapped, taps flipped.
fn adjoint_kernel(kernel: &Tensor) -> Result<Tensor> {
    let [cout, cin, k, _] = kernel.shape()[..] else {
        return shape_err("conv2d kernel must be rank-4");
    };
    let kd = kernel.data();
    let mut out = vec![0.0; kd.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for dy in 0..k {
                for dx in 0..k {
                    out[((ci * cout + co) * k + (k - 1 - dy)) * k + (k - 1 - dx)] =
                        kd[((co * cin + ci) * k + dy) * k + dx];
                }
            }
        }
    }
    Tensor::new([cin, cout, k, k], out)
}

fn widen_all(l: &Layout, t: &[f64], channels: usize) -> Vec<f64> {
    let plane = l.h * l.w;
    let mut wide = vec![0.0; channels * l.span];
    for c in 0..channels {
        for y in 0..l.h {
            let d = c * l.span + y * l.wp;
            let s = c * plane + y * l.w;
            wide[d..d + l.w].copy_from_slice(&t[s..s + l.w]);
        }
    }
    wide
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Gradient with respect to the input: the same-padded convolution of `g`
/// with the adjoint kernel.
fn conv2d_backward_input(g: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    conv2d_forward(g, &adjoint_kernel(kernel)?)
}

fn conv2d_backward_kernel(g: &Tensor, input: &Tensor, kshape: &[usize]) -> Result<Tensor> {
    let (cin, h, w) = input.dims3()?;
    let [cout, _, k, _] = kshape[..] else {
        return shape_err("conv2d kernel must be rank-4");
    };
    let l = Layout::new(h, w, k);
    let gw = widen_all(&l, g.data(), cout);
    let x = input.data();
    let plane = h * w;
    let plen = l.padded_len();
    let mut padded = vec![0.0; cin * plen];
    for ci in 0..cin {
        l.pad_into(&x[ci * plane..(ci + 1) * plane], &mut padded[ci * plen..(ci + 1) * plen]);
    }
    let kk = k * k;
    let taps: Vec<usize> = (0..kk).map(|t| l.offset(t / k, t % k)).collect();
    let full = l.span / LANES * LANES;
    let mut gk = vec![0.0; cout * cin * kk];
    for co in 0..cout {
        let gr = &gw[co * l.span..(co + 1) * l.span];
        for ci in 0..cin {
            let src = &padded[ci * plen..(ci + 1) * plen];
            // all taps at once so each gradient chunk is loaded a single time
            let mut acc = [[0.0; LANES]; 9];
            for j in (0..full).step_by(LANES) {
                let gv: &[f64; LANES] = gr[j..j + LANES].try_into().expect("lane");
                for (a, &off) in acc.iter_mut().zip(&taps) {
                    let sv: &[f64; LANES] = src[off + j..off + j + LANES].try_into().expect("lane");
                    for i in 0..LANES {
                        a[i] += gv[i] * sv[i];
                    }
                }
            }
            for (t, &off) in taps.iter().enumerate() {
                let a = acc[t];
                let tail: f64 = (full..l.span).map(|j| gr[j] * src[off + j]).sum();
                gk[(co * cin + ci) * kk + t] = (a[0] + a[1]) + (a[2] + a[3]) + tail;
            }
        }
    }
    Tensor::new(kshape.to_vec(), gk)
}

fn soft_threshold_forward(input: &Tensor, thresholds: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if thresholds.len() != c {
        return shape_err(format!(
            "soft_threshold: {} thresholds for {c} channels",
            thresholds.len()
        ));
    }
    let plane = h * w;
    let t = thresholds.data();
    let data = input
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| shrink(x, t[i / plane].abs()))
        .collect();
    Tensor::new([c, h, w], data)
}

/// Scalar soft-thresholding with a non-negative threshold.
#[inline]
pub fn shrink(x: f64, t: f64) -> f64 {
    let m = x.abs() - t;
    if m > 0.0 {
        x.signum() * m
    } else {
        0.0
    }
}

#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn soft_threshold_backward(
    g: &Tensor,
    input: &Tensor,
    thresholds: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = input.dims3()?;
    let plane = h * w;
    let t = thresholds.data();
    let mut gx = vec![0.0; c * plane];
    let mut gt = vec![0.0; c];
    for ch in 0..c {
        let tc = t[ch];
        let abs_t = tc.abs();
        let st = sign0(tc);
        for i in ch * plane..(ch + 1) * plane {
            let x = input.data()[i];
            if x.abs() > abs_t {
                gx[i] = g.data()[i];
                gt[ch] -= g.data()[i] * sign0(x) * st;
            }
        }
    }
    Ok((
        Tensor::new([c, h, w], gx)?,
        Tensor::new(thresholds.shape(), gt)?,
    ))
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let (n2, p) = b.dims2()?;
    if n != n2 {
        return shape_err(format!("matmul inner dimensions {m}x{n} * {n2}x{p}"));
    }
    let (ad, bd) = (a.data(), b.data());
    if p == 1 {
        let out = ad
            .chunks_exact(n.max(1))
            .take(m)
            .map(|row| dot(row, bd))
            .collect();
        return Tensor::new([m, 1], out);
    }
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = ad[i * n + k];
            for (o, &bv) in row.iter_mut().zip(&bd[k * p..(k + 1) * p]) {
                *o += aik * bv;
            }
        }
    }
    Tensor::new([m, p], out)
}

/// `aᵀ g` without materializing the transpose.
fn matmul_at_b(a: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let (m2, p) = g.dims2()?;
    if m != m2 {
        return shape_err(format!("matmul backward: {m}x{n} vs gradient {m2}x{p}"));
    }
    let (ad, gd) = (a.data(), g.data());
    let mut out = vec![0.0; n * p];
    if p == 1 {
        for (row, &gi) in ad.chunks_exact(n.max(1)).zip(gd) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * gi;
            }
        }
        return Tensor::new([n, 1], out);
    }
    for i in 0..m {
        let grow = &gd[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = ad[i * n + k];
            for (o, &gv) in out[k * p..(k + 1) * p].iter_mut().zip(grow) {
                *o += aik * gv;
            }
        }
    }
    Tensor::new([n, p], out)
}

/// `g bᵀ` without materializing the transpose.
fn matmul_a_bt(g: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, p) = g.dims2()?;
    let (n, p2) = b.dims2()?;
    if p != p2 {
        return shape_err(format!("matmul backward: gradient {m}x{p} vs {n}x{p2}"));
    }
    let (gd, bd) = (g.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let grow = &gd[i * p..(i + 1) * p];
        for k in 0..n {
            out[i * n + k] = grow
                .iter()
                .zip(&bd[k * p..(k + 1) * p])
                .map(|(x, y)| x * y)
                .sum();
        }
    }
    Tensor::new([m, n], out)
}

pub(crate) fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = a.data().to_vec();
    for row in out.chunks_mut(n.max(1)).take(m) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new([m, n], out)
}

fn softmax_rows_backward(y: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (_, n) = y.dims2()?;
    let mut out = vec![0.0; y.len()];
    for ((o, yr), gr) in out
        .chunks_mut(n)
        .zip(y.data().chunks(n))
        .zip(g.data().chunks(n))
    {
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((ov, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
            *ov = yv * (gv - inner);
        }
    }
    Tensor::new(y.shape(), out)
}
