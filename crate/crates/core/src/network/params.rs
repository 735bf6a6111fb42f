use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{count_params, params_per_phase, ModelConfig, Variant};
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;
use crate::trainer::xavier_uniform;

pub const INIT_THRESHOLD: f64 = 0.01;
pub const INIT_STEP: f64 = 0.1;
pub const INIT_MOMENTUM: f64 = 0.0;

/// Kernels of the non-local operator (all 1×1).
#[derive(Clone, Debug, PartialEq)]
pub struct NonlocalParams {
    /// `[nf/2, nf, 1, 1]`
    pub w_alpha: Tensor,
    /// `[nf/2, nf, 1, 1]`
    pub w_beta: Tensor,
    /// `[nf, nf, 1, 1]`
    pub w_phi: Tensor,
    /// `[nf, 2nf, 1, 1]`
    pub combine: Tensor,
}

/// Every learnable quantity of one phase. The half step and the full step
/// of a phase both read this same instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseParams {
    /// `[nf, 1, 3, 3]`
    pub d: Tensor,
    /// `[nf, nf, 3, 3]`
    pub a: Tensor,
    /// `[nf, nf, 3, 3]`
    pub b: Tensor,
    /// `[nf, nf, 3, 3]`
    pub b_tilde: Tensor,
    /// `[nf, nf, 3, 3]`
    pub a_tilde: Tensor,
    /// `[1, nf, 3, 3]`
    pub d_tilde: Tensor,
    /// `[nf]`
    pub theta: Tensor,
    pub gamma: Tensor,
    pub alpha: Tensor,
    pub beta: Tensor,
    pub nonlocal: Option<NonlocalParams>,
}

/// Field names in serialization order.
pub const FIELD_NAMES: [&str; 14] = [
    "d", "a", "b", "b_tilde", "a_tilde", "d_tilde", "theta", "gamma", "alpha", "beta", "w_alpha",
    "w_beta", "w_phi", "combine",
];

fn shapes(variant: Variant, nf: usize) -> Vec<Vec<usize>> {
    let mut s = vec![
        vec![nf, 1, 3, 3],
        vec![nf, nf, 3, 3],
        vec![nf, nf, 3, 3],
        vec![nf, nf, 3, 3],
        vec![nf, nf, 3, 3],
        vec![1, nf, 3, 3],
        vec![nf],
        vec![1],
        vec![1],
        vec![1],
    ];
    if variant.uses_nonlocal() {
        s.extend([
            vec![nf / 2, nf, 1, 1],
            vec![nf / 2, nf, 1, 1],
            vec![nf, nf, 1, 1],
            vec![nf, 2 * nf, 1, 1],
        ]);
    }
    s
}

impl PhaseParams {
    fn from_tensors(mut t: Vec<Tensor>) -> Self {
        let nonlocal = if t.len() == 14 {
            let combine = t.pop().unwrap();
            let w_phi = t.pop().unwrap();
            let w_beta = t.pop().unwrap();
            let w_alpha = t.pop().unwrap();
            Some(NonlocalParams {
                w_alpha,
                w_beta,
                w_phi,
                combine,
            })
        } else {
            None
        };
        let mut it = t.into_iter();
        let mut next = || it.next().expect("ten local tensors");
        Self {
            d: next(),
            a: next(),
            b: next(),
            b_tilde: next(),
            a_tilde: next(),
            d_tilde: next(),
            theta: next(),
            gamma: next(),
            alpha: next(),
            beta: next(),
            nonlocal,
        }
    }

    /// All-zero kernels and scalars.
    pub fn zeros(variant: Variant, nf: usize) -> Self {
        Self::from_tensors(shapes(variant, nf).into_iter().map(Tensor::zeros).collect())
    }

    /// Xavier-uniform kernels; thresholds 0.01, `γ = 0`, `α = β = 0.1`.
    pub fn init(variant: Variant, nf: usize, rng: &mut ChaCha8Rng) -> Self {
        let tensors = shapes(variant, nf)
            .into_iter()
            .enumerate()
            .map(|(i, shape)| match i {
                6 => Tensor::full(shape, INIT_THRESHOLD),
                7 => Tensor::full(shape, INIT_MOMENTUM),
                8 | 9 => Tensor::full(shape, INIT_STEP),
                _ => {
                    let k2 = shape[2] * shape[3];
                    xavier_uniform(&shape, shape[1] * k2, shape[0] * k2, rng)
                }
            })
            .collect();
        Self::from_tensors(tensors)
    }

    pub fn variant(&self) -> Variant {
        if self.nonlocal.is_some() {
            Variant::Epn
        } else {
            Variant::Ep
        }
    }

    pub fn nf(&self) -> usize {
        self.theta.len()
    }

    /// Tensors in serialization order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.d,
            &self.a,
            &self.b,
            &self.b_tilde,
            &self.a_tilde,
            &self.d_tilde,
            &self.theta,
            &self.gamma,
            &self.alpha,
            &self.beta,
        ];
        if let Some(nl) = &self.nonlocal {
            v.extend([&nl.w_alpha, &nl.w_beta, &nl.w_phi, &nl.combine]);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.d,
            &mut self.a,
            &mut self.b,
            &mut self.b_tilde,
            &mut self.a_tilde,
            &mut self.d_tilde,
            &mut self.theta,
            &mut self.gamma,
            &mut self.alpha,
            &mut self.beta,
        ];
        if let Some(nl) = &mut self.nonlocal {
            v.extend([&mut nl.w_alpha, &mut nl.w_beta, &mut nl.w_phi, &mut nl.combine]);
        }
        v
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self, variant: Variant, nf: usize) -> Result<()> {
        let expected = shapes(variant, nf);
        let actual = self.tensors();
        if expected.len() != actual.len() {
            return shape_err(format!(
                "phase holds {} tensors, variant {variant} needs {}",
                actual.len(),
                expected.len()
            ));
        }
        for ((name, want), got) in FIELD_NAMES.iter().zip(&expected).zip(&actual) {
            if got.shape() != &want[..] {
                return shape_err(format!(
                    "phase field `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    want
                ));
            }
        }
        Ok(())
    }

    /// Inserts every tensor as a graph leaf (trainable or constant).
    pub fn attach(&self, g: &mut Graph, trainable: bool) -> PhaseVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        PhaseVars {
            d: leaf(&self.d),
            a: leaf(&self.a),
            b: leaf(&self.b),
            b_tilde: leaf(&self.b_tilde),
            a_tilde: leaf(&self.a_tilde),
            d_tilde: leaf(&self.d_tilde),
            theta: leaf(&self.theta),
            gamma: leaf(&self.gamma),
            alpha: leaf(&self.alpha),
            beta: leaf(&self.beta),
            nonlocal: self.nonlocal.as_ref().map(|nl| NonlocalVars {
                w_alpha: leaf(&nl.w_alpha),
                w_beta: leaf(&nl.w_beta),
                w_phi: leaf(&nl.w_phi),
                combine: leaf(&nl.combine),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NonlocalVars {
    pub w_alpha: Var,
    pub w_beta: Var,
    pub w_phi: Var,
    pub combine: Var,
}

/// Graph handles mirroring [`PhaseParams`].
#[derive(Clone, Copy, Debug)]
pub struct PhaseVars {
    pub d: Var,
    pub a: Var,
    pub b: Var,
    pub b_tilde: Var,
    pub a_tilde: Var,
    pub d_tilde: Var,
    pub theta: Var,
    pub gamma: Var,
    pub alpha: Var,
    pub beta: Var,
    pub nonlocal: Option<NonlocalVars>,
}

impl PhaseVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![
            self.d,
            self.a,
            self.b,
            self.b_tilde,
            self.a_tilde,
            self.d_tilde,
            self.theta,
            self.gamma,
            self.alpha,
            self.beta,
        ];
        if let Some(nl) = self.nonlocal {
            v.extend([nl.w_alpha, nl.w_beta, nl.w_phi, nl.combine]);
        }
        v
    }
}

/// Parameters of all phases.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub phases: Vec<PhaseParams>,
}

impl ModelParams {
    pub fn new(config: ModelConfig, phases: Vec<PhaseParams>) -> Result<Self> {
        config.validate()?;
        if phases.len() != config.phases {
            return shape_err(format!(
                "{} phase parameter sets for a {}-phase model",
                phases.len(),
                config.phases
            ));
        }
        for p in &phases {
            p.validate(config.variant, config.nf)?;
        }
        Ok(Self { config, phases })
    }

    /// Fresh model: Xavier kernels from a seeded stream, fixed scalars.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..config.phases)
            .map(|_| PhaseParams::init(config.variant, config.nf, &mut rng))
            .collect();
        Self::new(config, phases)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let phases = (0..config.phases)
            .map(|_| PhaseParams::zeros(config.variant, config.nf))
            .collect();
        Self::new(config, phases)
    }

    pub fn count(&self) -> usize {
        self.phases.iter().map(PhaseParams::count).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.phases.iter().flat_map(|p| p.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.phases.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }

    /// All values, phase by phase, fields in serialization order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn from_flat(config: ModelConfig, values: &[f64]) -> Result<Self> {
        config.validate()?;
        let expected = count_params(&config);
        if values.len() != expected {
            return shape_err(format!(
                "{} values for a model with {expected} parameters",
                values.len()
            ));
        }
        let per = params_per_phase(config.variant, config.nf);
        let phases = values
            .chunks(per)
            .map(|chunk| {
                let mut offset = 0;
                let tensors = shapes(config.variant, config.nf)
                    .into_iter()
                    .map(|shape| {
                        let len: usize = shape.iter().product();
                        let t = Tensor::new(shape, chunk[offset..offset + len].to_vec())
                            .expect("length checked");
                        offset += len;
                        t
                    })
                    .collect();
                PhaseParams::from_tensors(tensors)
            })
            .collect();
        Self::new(config, phases)
    }
}
