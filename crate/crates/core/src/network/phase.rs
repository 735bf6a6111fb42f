//! Forward pass of the unrolled network.

use std::sync::Arc;

use super::config::ModelConfig;
use super::params::{ModelParams, NonlocalVars, PhaseParams, PhaseVars};
use crate::autodiff::{Graph, Var};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Measurement operator `Φ` with its transpose, shareable across graphs.
#[derive(Clone, Debug)]
pub struct Sensing {
    phi: Arc<Tensor>,
    phi_t: Arc<Tensor>,
}

/// Graph handles for `Φ`, `Φᵀ` and one observation `y` (as an `[m, 1]` column).
#[derive(Clone, Copy, Debug)]
pub struct SensingVars {
    pub phi: Var,
    pub phi_t: Var,
    pub y: Var,
}

impl Sensing {
    pub fn new(phi: Tensor) -> Result<Self> {
        phi.dims2()?;
        let phi_t = phi.transpose()?;
        Ok(Self {
            phi: Arc::new(phi),
            phi_t: Arc::new(phi_t),
        })
    }

    pub fn phi(&self) -> &Tensor {
        &self.phi
    }

    pub fn rows(&self) -> usize {
        self.phi.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.phi.shape()[1]
    }

    pub fn attach(&self, g: &mut Graph, y: &Tensor) -> Result<SensingVars> {
        if y.len() != self.rows() {
            return shape_err(format!(
                "observation has {} entries, measurement matrix has {} rows",
                y.len(),
                self.rows()
            ));
        }
        Ok(SensingVars {
            phi: g.constant_shared(self.phi.clone()),
            phi_t: g.constant_shared(self.phi_t.clone()),
            y: g.constant(y.reshape([self.rows(), 1])?),
        })
    }

    /// `y = Φ vec(x)` as an `[m]` vector.
    pub fn measure(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.cols() {
            return shape_err(format!(
                "image has {} pixels, measurement matrix has {} columns",
                x.len(),
                self.cols()
            ));
        }
        let col = x.reshape([self.cols(), 1])?;
        crate::autodiff::matmul(&self.phi, &col)?.reshape([self.rows()])
    }
}

/// `∇f(x) = 2 Φᵀ(Φx − y)` for `f(x) = ‖Φx − y‖²`, on the graph.
pub fn grad_f_var(g: &mut Graph, s: &SensingVars, x: Var) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).len();
    let col = g.reshape(x, [n, 1])?;
    let phix = g.matmul(s.phi, col)?;
    let r = g.sub(phix, s.y)?;
    let back = g.matmul(s.phi_t, r)?;
    let twice = g.scale(back, 2.0);
    g.reshape(twice, shape)
}

/// `∇f(x) = 2 Φᵀ(Φx − y)` reshaped to the image shape of `x`.
pub fn grad_f(phi: &Tensor, y: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (m, n) = phi.dims2()?;
    if x.len() != n {
        return shape_err(format!("image has {} pixels, Φ has {n} columns", x.len()));
    }
    if y.len() != m {
        return shape_err(format!("observation has {} entries, Φ has {m} rows", y.len()));
    }
    let (p, xd, yd) = (phi.data(), x.data(), y.data());
    let r: Vec<f64> = (0..m)
        .map(|i| p[i * n..(i + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum::<f64>() - yd[i])
        .collect();
    let mut out = vec![0.0; n];
    for (i, ri) in r.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(&p[i * n..(i + 1) * n]) {
            *o += a * ri;
        }
    }
    Tensor::new(x.shape(), out.into_iter().map(|v| 2.0 * v).collect())
}

fn expect_channels(g: &Graph, v: Var, c: usize, what: &str) -> Result<()> {
    let (got, _, _) = g.value(v).dims3()?;
    if got != c {
        return shape_err(format!("{what}: expected {c} channel(s), got {got}"));
    }
    Ok(())
}

/// Forward transform `B·ReLU(A·D·x)`: one channel in, `nf` out.
pub fn g_forward(g: &mut Graph, p: &PhaseVars, x: Var) -> Result<Var> {
    expect_channels(g, x, 1, "forward transform input")?;
    let dx = g.conv2d(x, p.d)?;
    let adx = g.conv2d(dx, p.a)?;
    let act = g.relu(adx);
    g.conv2d(act, p.b)
}

/// Backward transform `D̃·Ã·ReLU(B̃·z)`: `nf` channels in, one out.
pub fn g_tilde(g: &mut Graph, p: &PhaseVars, z: Var) -> Result<Var> {
    let nf = g.value(p.b_tilde).shape()[1];
    expect_channels(g, z, nf, "backward transform input")?;
    let bz = g.conv2d(z, p.b_tilde)?;
    let act = g.relu(bz);
    let abz = g.conv2d(act, p.a_tilde)?;
    g.conv2d(abz, p.d_tilde)
}

/// Embedded-Gaussian non-local operator `ReLU(C·[z, v])`, where the response
/// at position `i` is `v_i = Σ_j ω_ij · W_φ z_j` and
/// `ω_ij = softmax_j((W_α z_i)ᵀ (W_β z_j))`.
pub fn nonlocal_forward(g: &mut Graph, nl: &NonlocalVars, z: Var) -> Result<Var> {
    nonlocal_parts(g, nl, z).map(|(out, _)| out)
}

/// Non-local output together with the weight-matrix node `ω`.
fn nonlocal_parts(g: &mut Graph, nl: &NonlocalVars, z: Var) -> Result<(Var, Var)> {
    let (nf, h, w) = g.value(z).dims3()?;
    if nf % 2 != 0 {
        return invalid(format!("non-local operator needs an even channel count, got {nf}"));
    }
    let n = h * w;
    let za = g.conv2d(z, nl.w_alpha)?;
    let zb = g.conv2d(z, nl.w_beta)?;
    let zp = g.conv2d(z, nl.w_phi)?;
    let half = nf / 2;
    let ea = g.reshape(za, [half, n])?;
    let eb = g.reshape(zb, [half, n])?;
    let ep = g.reshape(zp, [nf, n])?;
    let ea_t = g.transpose(ea)?;
    let logits = g.matmul(ea_t, eb)?;
    let weights = g.softmax_rows(logits)?;
    let weights_t = g.transpose(weights)?;
    let v = g.matmul(ep, weights_t)?;
    let v = g.reshape(v, [nf, h, w])?;
    let joined = g.concat_channels(z, v)?;
    let mixed = g.conv2d(joined, nl.combine)?;
    Ok((g.relu(mixed), weights))
}

/// Learned residual `G̃(N(soft(G(b), θ)))`, with `N` skipped when absent.
pub fn learned_residual(g: &mut Graph, p: &PhaseVars, b: Var) -> Result<Var> {
    let feats = g_forward(g, p, b)?;
    let sparse = g.soft_threshold(feats, p.theta)?;
    let mixed = match &p.nonlocal {
        Some(nl) => nonlocal_forward(g, nl, sparse)?,
        None => sparse,
    };
    g_tilde(g, p, mixed)
}

/// `x^k` and `x^{k−½}` carried between phases.
#[derive(Clone, Copy, Debug)]
pub struct PhaseState {
    pub x: Var,
    pub x_half: Var,
}

impl PhaseState {
    pub fn start(x0: Var) -> Self {
        Self { x: x0, x_half: x0 }
    }
}

/// Step and momentum scalars of a phase (one-element graph nodes).
#[derive(Clone, Copy, Debug)]
pub struct PhaseScalars {
    pub gamma: Var,
    pub alpha: Var,
    pub beta: Var,
}

/// One accelerated extra proximal gradient phase with a pluggable residual
/// map; both half and full steps call the same `residual`.
pub fn phase_step(
    g: &mut Graph,
    scalars: PhaseScalars,
    state: PhaseState,
    sensing: &SensingVars,
    residual: &mut dyn FnMut(&mut Graph, Var) -> Result<Var>,
) -> Result<PhaseState> {
    let shape = g.value(state.x).shape().to_vec();
    if g.value(state.x_half).shape() != &shape[..] {
        return shape_err(format!(
            "phase state shapes differ: {:?} vs {:?}",
            shape,
            g.value(state.x_half).shape()
        ));
    }
    // x̃ = x + γ(x − x_half)
    let d = g.sub(state.x, state.x_half)?;
    let gd = g.scalar_mul(scalars.gamma, d)?;
    let tilde = g.add(state.x, gd)?;
    // b = x̃ − α∇f(x̃)
    let grad = grad_f_var(g, sensing, tilde)?;
    let step = g.scalar_mul(scalars.alpha, grad)?;
    let b_half = g.sub(tilde, step)?;
    let r_half = residual(g, b_half)?;
    let x_half = g.add(b_half, r_half)?;
    // x̂ = x_half + γ(x_half − x)
    let d = g.sub(x_half, state.x)?;
    let gd = g.scalar_mul(scalars.gamma, d)?;
    let hat = g.add(x_half, gd)?;
    let grad = grad_f_var(g, sensing, hat)?;
    let step = g.scalar_mul(scalars.beta, grad)?;
    let b_next = g.sub(hat, step)?;
    let r_next = residual(g, b_next)?;
    let x_next = g.add(b_next, r_next)?;
    Ok(PhaseState {
        x: x_next,
        x_half,
    })
}

/// Phase with the learned residual (non-local operator used iff
/// `use_nonlocal` and the phase carries its kernels).
pub fn phase_forward(
    g: &mut Graph,
    p: &PhaseVars,
    state: PhaseState,
    sensing: &SensingVars,
    use_nonlocal: bool,
) -> Result<PhaseState> {
    if use_nonlocal && p.nonlocal.is_none() {
        return invalid("non-local phase requested but the phase has no non-local kernels");
    }
    let vars = if use_nonlocal {
        *p
    } else {
        PhaseVars {
            nonlocal: None,
            ..*p
        }
    };
    let scalars = PhaseScalars {
        gamma: p.gamma,
        alpha: p.alpha,
        beta: p.beta,
    };
    phase_step(g, scalars, state, sensing, &mut |g, b| learned_residual(g, &vars, b))
}

/// Cascade of phases from `x0` (already `Q₀y`, shaped `[1, H, W]`).
pub fn model_forward(
    g: &mut Graph,
    config: &ModelConfig,
    phases: &[PhaseVars],
    sensing: &SensingVars,
    x0: Var,
) -> Result<Var> {
    if phases.len() != config.phases {
        return shape_err(format!(
            "{} phases supplied for a {}-phase model",
            phases.len(),
            config.phases
        ));
    }
    let mut state = PhaseState::start(x0);
    for p in phases {
        state = phase_forward(g, p, state, sensing, config.variant.uses_nonlocal())?;
    }
    Ok(state.x)
}

/// `x⁰ = Q₀ y` reshaped to `[1, H, W]`.
pub fn initial_image(q0: &Tensor, y: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (n, m) = q0.dims2()?;
    if y.len() != m {
        return shape_err(format!("observation has {} entries, Q0 expects {m}", y.len()));
    }
    if n != height * width {
        return shape_err(format!("Q0 produces {n} pixels, patch is {height}x{width}"));
    }
    crate::autodiff::matmul(q0, &y.reshape([m, 1])?)?.reshape([1, height, width])
}

/// Forward-only reconstruction of one observation `y` starting from `x0`.
pub fn reconstruct(
    params: &ModelParams,
    sensing: &Sensing,
    y: &Tensor,
    x0: &Tensor,
) -> Result<Tensor> {
    let cfg = &params.config;
    let mut g = Graph::new();
    let phases: Vec<PhaseVars> = params.phases.iter().map(|p| p.attach(&mut g, false)).collect();
    let s = sensing.attach(&mut g, y)?;
    let x0 = g.constant(x0.reshape([1, cfg.height, cfg.width])?);
    let out = model_forward(&mut g, cfg, &phases, &s, x0)?;
    Ok(g.value(out).clone())
}

fn single_phase_graph(p: &PhaseParams) -> (Graph, PhaseVars) {
    let mut g = Graph::new();
    let vars = p.attach(&mut g, false);
    (g, vars)
}

/// Tensor-level forward transform.
pub fn apply_g(p: &PhaseParams, x: &Tensor) -> Result<Tensor> {
    let (mut g, vars) = single_phase_graph(p);
    let xv = g.constant(x.clone());
    let out = g_forward(&mut g, &vars, xv)?;
    Ok(g.value(out).clone())
}

/// Tensor-level backward transform.
pub fn apply_g_tilde(p: &PhaseParams, z: &Tensor) -> Result<Tensor> {
    let (mut g, vars) = single_phase_graph(p);
    let zv = g.constant(z.clone());
    let out = g_tilde(&mut g, &vars, zv)?;
    Ok(g.value(out).clone())
}

/// Tensor-level non-local operator; also returns the `n × n` weight matrix.
pub fn apply_nonlocal(p: &PhaseParams, z: &Tensor) -> Result<(Tensor, Tensor)> {
    if p.nonlocal.is_none() {
        return invalid("phase has no non-local kernels");
    }
    let (mut g, vars) = single_phase_graph(p);
    let zv = g.constant(z.clone());
    let (out, weights) = nonlocal_parts(&mut g, vars.nonlocal.as_ref().expect("attached"), zv)?;
    Ok((g.value(out).clone(), g.value(weights).clone()))
}
