//! Proximal gradient family: ISTA, FISTA, extra proximal gradient and the
//! accelerated extra proximal gradient scheme.

use std::time::Instant;

use nalgebra::DVector;

use super::problem::CompositeProblem;
use super::prox::prox_unchecked;
use crate::error::{invalid, Result};

/// Momentum sequence `γ_k`, indexed from `k = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Momentum {
    /// `γ_k = (k − 1)/(k + 2)`, so `γ_1 = 0`.
    Nesterov,
    /// `γ_k ≡ 0`.
    Zero,
    /// `γ_k ≡ c`.
    Fixed(f64),
}

impl Momentum {
    pub fn at(self, k: usize) -> f64 {
        match self {
            Momentum::Nesterov => (k as f64 - 1.0) / (k as f64 + 2.0),
            Momentum::Zero => 0.0,
            Momentum::Fixed(c) => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    Tolerance,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `|F_k − F_{k−1}| ≤ rel_tol · |F_{k−1}|`.
    pub rel_tol: f64,
    pub record_iterates: bool,
    /// Record elapsed wall time per iteration; disabled traces report 0 ms.
    pub wall_clock: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            rel_tol: 1e-10,
            record_iterates: false,
            wall_clock: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    /// Running minimum of the objective.
    pub best: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    pub stop: StopReason,
    pub x: DVector<f64>,
    /// `x^0, x^1, …` when requested; half-iterates are not stored.
    pub iterates: Vec<DVector<f64>>,
}

impl SolverTrace {
    pub fn final_objective(&self) -> f64 {
        self.entries.last().map(|e| e.objective).unwrap_or(f64::NAN)
    }

    pub fn best_objective(&self) -> f64 {
        self.entries.last().map(|e| e.best).unwrap_or(f64::NAN)
    }

    /// First iteration whose objective is within `tol` of `target`.
    pub fn iterations_to(&self, target: f64, tol: f64) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.objective - target <= tol)
            .map(|e| e.iter)
    }

    /// Renders `iteration,objective,time_ms` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,time_ms\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.17e},{:.3}\n", e.iter, e.objective, e.elapsed_ms));
        }
        out
    }
}

struct Recorder<'a> {
    problem: &'a CompositeProblem,
    config: &'a SolverConfig,
    start: Instant,
    trace: SolverTrace,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a CompositeProblem, config: &'a SolverConfig, x0: &DVector<f64>) -> Self {
        let objective = problem.objective(x0);
        let trace = SolverTrace {
            entries: vec![TraceEntry {
                iter: 0,
                objective,
                best: objective,
                alpha: 0.0,
                beta: 0.0,
                gamma: 0.0,
                elapsed_ms: 0.0,
            }],
            stop: StopReason::MaxIters,
            x: x0.clone(),
            iterates: if config.record_iterates {
                vec![x0.clone()]
            } else {
                Vec::new()
            },
        };
        Self {
            problem,
            config,
            start: Instant::now(),
            trace,
        }
    }

    /// Records iterate `k`; returns true when the tolerance rule fires.
    fn record(&mut self, k: usize, x: &DVector<f64>, alpha: f64, beta: f64, gamma: f64) -> bool {
        let objective = self.problem.objective(x);
        let prev = self.trace.entries.last().expect("initial entry");
        let best = prev.best.min(objective);
        let converged = (objective - prev.objective).abs() <= self.config.rel_tol * prev.objective.abs();
        let elapsed_ms = if self.config.wall_clock {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.trace.entries.push(TraceEntry {
            iter: k,
            objective,
            best,
            alpha,
            beta,
            gamma,
            elapsed_ms,
        });
        if self.config.record_iterates {
            self.trace.iterates.push(x.clone());
        }
        converged
    }

    fn finish(mut self, x: DVector<f64>, stop: StopReason) -> SolverTrace {
        self.trace.x = x;
        self.trace.stop = stop;
        self.trace
    }
}

fn check_step(name: &str, step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("{name} must be a positive finite step, got {step}"));
    }
    Ok(())
}

fn check_len(problem: &CompositeProblem, x0: &DVector<f64>) -> Result<()> {
    if problem.f.dim() != x0.len() {
        return invalid(format!(
            "starting point has {} entries but the problem has {} unknowns",
            x0.len(),
            problem.f.dim()
        ));
    }
    Ok(())
}

/// `prox_{λ·step}(z − step·∇f(z))`; plain gradient step when `λ = 0`.
fn forward_backward(problem: &CompositeProblem, z: &DVector<f64>, step: f64) -> DVector<f64> {
    let b = z - problem.f.grad(z) * step;
    prox_step(problem, b, step)
}

fn prox_step(problem: &CompositeProblem, b: DVector<f64>, step: f64) -> DVector<f64> {
    if problem.lambda == 0.0 {
        b
    } else {
        prox_unchecked(&problem.g, &b, problem.lambda * step)
    }
}

/// Proximal gradient descent with constant step `alpha ∈ (0, 1/L]`.
pub fn ista(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    alpha: f64,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    check_step("alpha", alpha)?;
    check_len(problem, x0)?;
    let mut rec = Recorder::new(problem, config, x0);
    let mut x = x0.clone();
    for k in 1..=config.max_iters {
        x = forward_backward(problem, &x, alpha);
        if rec.record(k, &x, alpha, alpha, 0.0) {
            return Ok(rec.finish(x, StopReason::Tolerance));
        }
    }
    Ok(rec.finish(x, StopReason::MaxIters))
}

/// Nesterov-accelerated proximal gradient (FISTA form) with
/// `x̃^k = x^k + γ_k (x^k − x^{k−1})`, `γ_k = (k − 1)/(k + 2)`.
pub fn nesterov_accel(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    alpha: f64,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    check_step("alpha", alpha)?;
    check_len(problem, x0)?;
    let mut rec = Recorder::new(problem, config, x0);
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    for k in 1..=config.max_iters {
        let gamma = Momentum::Nesterov.at(k);
        let extrapolated = &x + (&x - &x_prev) * gamma;
        let next = forward_backward(problem, &extrapolated, alpha);
        x_prev = std::mem::replace(&mut x, next);
        if rec.record(k, &x, alpha, alpha, gamma) {
            return Ok(rec.finish(x, StopReason::Tolerance));
        }
    }
    Ok(rec.finish(x, StopReason::MaxIters))
}

/// Extra proximal gradient:
/// `x^{k+½} = prox(x^k − α∇f(x^k))`, `x^{k+1} = prox(x^k − β∇f(x^{k+½}))`.
pub fn extra_proximal_gradient(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    alpha: f64,
    beta: f64,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    check_step("alpha", alpha)?;
    check_step("beta", beta)?;
    check_len(problem, x0)?;
    let mut rec = Recorder::new(problem, config, x0);
    let mut x = x0.clone();
    for k in 1..=config.max_iters {
        let half = forward_backward(problem, &x, alpha);
        let b = &x - problem.f.grad(&half) * beta;
        x = prox_step(problem, b, beta);
        if rec.record(k, &x, alpha, beta, 0.0) {
            return Ok(rec.finish(x, StopReason::Tolerance));
        }
    }
    Ok(rec.finish(x, StopReason::MaxIters))
}

/// Iterate pair carried between accelerated extra proximal gradient steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AepgState {
    /// `x^k`
    pub x: DVector<f64>,
    /// `x^{k−½}`
    pub x_half: DVector<f64>,
}

impl AepgState {
    /// Starts with `x^{½} := x^0`, so the first extrapolation vanishes.
    pub fn start(x0: &DVector<f64>) -> Self {
        Self {
            x: x0.clone(),
            x_half: x0.clone(),
        }
    }
}

/// One accelerated extra proximal gradient iteration:
///
/// ```text
/// x̃     = x^k + γ (x^k − x^{k−½})
/// b     = x̃ − α ∇f(x̃)
/// x^{k+½} = prox_{λα}(b)
/// x̂     = x^{k+½} + γ (x^{k+½} − x^k)
/// b'    = x̂ − β ∇f(x̂)
/// x^{k+1} = prox_{λβ}(b')
/// ```
pub fn aepg_step(
    problem: &CompositeProblem,
    state: &AepgState,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> AepgState {
    let tilde = &state.x + (&state.x - &state.x_half) * gamma;
    let half = forward_backward(problem, &tilde, alpha);
    let hat = &half + (&half - &state.x) * gamma;
    let next = forward_backward(problem, &hat, beta);
    AepgState {
        x: next,
        x_half: half,
    }
}

/// Accelerated extra proximal gradient with momentum schedule `momentum`
/// (`γ_1` is forced to 0).
pub fn accelerated_extra_proximal_gradient(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    alpha: f64,
    beta: f64,
    momentum: Momentum,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    check_step("alpha", alpha)?;
    check_step("beta", beta)?;
    check_len(problem, x0)?;
    if let Momentum::Fixed(c) = momentum {
        if !c.is_finite() {
            return invalid(format!("momentum must be finite, got {c}"));
        }
    }
    let mut rec = Recorder::new(problem, config, x0);
    let mut state = AepgState::start(x0);
    for k in 1..=config.max_iters {
        let gamma = if k == 1 { 0.0 } else { momentum.at(k) };
        state = aepg_step(problem, &state, alpha, beta, gamma);
        if rec.record(k, &state.x, alpha, beta, gamma) {
            return Ok(rec.finish(state.x, StopReason::Tolerance));
        }
    }
    Ok(rec.finish(state.x, StopReason::MaxIters))
}

/// Solver selector used by the command-line front end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ista,
    Fista,
    Epg,
    Aepg,
}

impl std::str::FromStr for Algorithm {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ista" => Ok(Algorithm::Ista),
            "fista" => Ok(Algorithm::Fista),
            "epg" => Ok(Algorithm::Epg),
            "aepg" => Ok(Algorithm::Aepg),
            other => invalid(format!("unknown algorithm `{other}` (ista|fista|epg|aepg)")),
        }
    }
}

/// Fraction of the requested step used by the extragradient scheme, whose
/// iteration map has unit gain along the top curvature direction at `1/L`.
pub const EPG_STEP_FRACTION: f64 = 0.9;

/// Runs `algo` with `α = β = step` (`EPG_STEP_FRACTION · step` for `Epg`).
pub fn run(
    algo: Algorithm,
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    step: f64,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    match algo {
        Algorithm::Ista => ista(problem, x0, step, config),
        Algorithm::Fista => nesterov_accel(problem, x0, step, config),
        Algorithm::Epg => {
            let s = EPG_STEP_FRACTION * step;
            extra_proximal_gradient(problem, x0, s, s, config)
        }
        Algorithm::Aepg => {
            accelerated_extra_proximal_gradient(problem, x0, step, step, Momentum::Nesterov, config)
        }
    }
}
