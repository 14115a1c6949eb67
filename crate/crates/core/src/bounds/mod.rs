//! Bound propagation: interval bounds (IBP), Fast-Lin and CROWN.
//!
//! All engines are generic over [`Scalar`]; with `f64` they certify, with
//! [`Var`](crate::autodiff::Var) they produce a differentiable graph. Neuron
//! grouping and every per-neuron branch read plain values, so they stay fixed
//! for a given forward pass.

mod crown;
mod fastlin;
mod ibp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crown::{crown_certify, IntermediateBounds};
pub use fastlin::fastlin_certify;
pub use ibp::{ibp_bounds, ibp_certify, ibp_first_layer};

use crate::error::{Error, Result};
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::{Norm, Tensor};

/// Neurons whose bounds are this close are treated as stable.
pub const SLOPE_GUARD: f64 = 1e-12;

/// The perturbation ball B_{p,ε}(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub norm: Norm,
    pub eps: f64,
}

impl PerturbationSpec {
    pub fn new(norm: Norm, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Contract(format!("perturbation radius must be finite and >= 0, got {eps}")));
        }
        Ok(Self { norm, eps })
    }

    pub fn linf(eps: f64) -> Result<Self> {
        Self::new(Norm::Linf, eps)
    }

    pub fn l2(eps: f64) -> Result<Self> {
        Self::new(Norm::L2, eps)
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.norm, eps)
    }

    pub fn contains(&self, delta: &[f64], slack: f64) -> bool {
        self.norm.primal(delta) <= self.eps * (1.0 + slack) + slack
    }
}

/// Which of the three disjoint neuron sets a pre-activation falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeuronGroup {
    /// x̄ ≤ 0.
    Inactive,
    /// x̲ ≥ 0.
    Active,
    /// x̲ < 0 < x̄.
    Unstable,
}

impl NeuronGroup {
    pub fn classify(lower: f64, upper: f64) -> Self {
        if upper <= 0.0 {
            NeuronGroup::Inactive
        } else if lower >= 0.0 {
            NeuronGroup::Active
        } else if upper - lower < SLOPE_GUARD {
            // upper > 0 here.
            NeuronGroup::Active
        } else {
            NeuronGroup::Unstable
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerBounds<T = f64> {
    pub lower: Tensor<T>,
    pub upper: Tensor<T>,
}

impl<T: Scalar> LayerBounds<T> {
    pub fn from_center_radius(center: &Tensor<T>, radius: &Tensor<T>) -> Result<Self> {
        Ok(Self {
            lower: center.sub(radius)?,
            upper: center.add(radius)?,
        })
    }

    pub fn width(&self) -> usize {
        self.lower.len()
    }

    pub fn groups(&self) -> Vec<NeuronGroup> {
        self.lower
            .data()
            .iter()
            .zip(self.upper.data())
            .map(|(l, u)| NeuronGroup::classify(l.value(), u.value()))
            .collect()
    }

    pub fn detach(&self) -> LayerBounds<f64> {
        LayerBounds {
            lower: self.lower.detach(),
            upper: self.upper.detach(),
        }
    }

    /// Whether `x` lies inside the box with absolute slack `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.data().iter().zip(self.upper.data()))
            .all(|(&v, (l, u))| v >= l.value() - tol && v <= u.value() + tol)
    }
}

/// Pre-activation bounds for every linear layer 1..L (the last entry bounds
/// the logits).
#[derive(Debug, Clone)]
pub struct BoundState<T = f64> {
    pub layers: Vec<LayerBounds<T>>,
}

impl<T: Scalar> BoundState<T> {
    /// Grouping of layer `i` (0-based).
    pub fn groups(&self, i: usize) -> Vec<NeuronGroup> {
        self.layers[i].groups()
    }

    /// Indices of unstable neurons in hidden layer `i` (0-based).
    pub fn unstable(&self, i: usize) -> Vec<usize> {
        self.groups(i)
            .into_iter()
            .enumerate()
            .filter(|(_, g)| *g == NeuronGroup::Unstable)
            .map(|(j, _)| j)
            .collect()
    }

    /// Σ_i |I_i| over hidden layers.
    pub fn unstable_count(&self) -> usize {
        (0..self.layers.len().saturating_sub(1)).map(|i| self.unstable(i).len()).sum()
    }

    pub fn detach(&self) -> BoundState<f64> {
        BoundState {
            layers: self.layers.iter().map(LayerBounds::detach).collect(),
        }
    }
}

/// The Fast-Lin relaxation of one hidden layer: slopes D_i and intercept
/// upper bounds δ̄_i = −x̄x̲/(x̄−x̲) (zero on stable neurons).
#[derive(Debug, Clone)]
pub struct LayerRelaxation<T = f64> {
    pub groups: Vec<NeuronGroup>,
    pub slopes: Tensor<T>,
    pub intercept_bounds: Tensor<T>,
}

impl<T: Scalar> LayerRelaxation<T> {
    pub fn from_bounds(b: &LayerBounds<T>) -> Self {
        let groups = b.groups();
        let mut slopes = Vec::with_capacity(groups.len());
        let mut intercepts = Vec::with_capacity(groups.len());
        for (j, g) in groups.iter().enumerate() {
            match g {
                NeuronGroup::Inactive => {
                    slopes.push(T::zero());
                    intercepts.push(T::zero());
                }
                NeuronGroup::Active => {
                    slopes.push(T::one());
                    intercepts.push(T::zero());
                }
                NeuronGroup::Unstable => {
                    let (l, u) = (b.lower.data()[j], b.upper.data()[j]);
                    let width = u - l;
                    slopes.push(u / width);
                    intercepts.push(-(u * l) / width);
                }
            }
        }
        Self {
            groups,
            slopes: Tensor::from_parts(vec![slopes.len()], slopes),
            intercept_bounds: Tensor::from_parts(vec![intercepts.len()], intercepts),
        }
    }
}

/// Per-objective part of a linear relaxation.
#[derive(Debug, Clone)]
pub struct TargetRelaxation<T = f64> {
    /// c_tᵀ 𝒲_{L:1}: the coefficient row on the input perturbation δ_0.
    pub input_coef: Tensor<T>,
    /// c_tᵀ g_L(x): the relaxed linear network evaluated at the clean input.
    pub clean_value: T,
    /// c_tᵀ 𝒲_{L:i+1} for each hidden layer i: coefficients on δ_i.
    pub layer_coefs: Vec<Tensor<T>>,
    /// Slopes D_i actually used for this objective.
    pub slopes: Vec<Tensor<T>>,
    /// p_C*.
    pub bound: T,
}

/// Equivalent linear network of a relaxation.
#[derive(Debug, Clone)]
pub struct LinearRelaxation<T = f64> {
    /// Fast-Lin relaxation of every hidden layer (slopes D_i, δ̄_i).
    pub layers: Vec<LayerRelaxation<T>>,
    /// 𝒲_{i:1} for i = 1..L, from forward accumulation (Fast-Lin only).
    pub input_maps: Vec<Tensor<T>>,
    /// g_i(x) for i = 1..L (Fast-Lin only).
    pub clean_values: Vec<Tensor<T>>,
    pub targets: Vec<TargetRelaxation<T>>,
}

/// Bounds, relaxation and margin lower bounds from one engine run.
#[derive(Debug, Clone)]
pub struct Certification<T = f64> {
    pub engine: Engine,
    pub bounds: BoundState<T>,
    /// Absent for IBP.
    pub relaxation: Option<LinearRelaxation<T>>,
    /// p_C* for each objective, in order.
    pub margins: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Ibp,
    #[serde(alias = "fast-lin")]
    Fastlin,
    Crown,
    CrownIbp,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ibp" => Ok(Engine::Ibp),
            "fastlin" | "fast-lin" => Ok(Engine::Fastlin),
            "crown" => Ok(Engine::Crown),
            "crown-ibp" | "crownibp" => Ok(Engine::CrownIbp),
            other => Err(Error::Config(format!("unknown engine {other:?}"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Ibp => "ibp",
            Engine::Fastlin => "fastlin",
            Engine::Crown => "crown",
            Engine::CrownIbp => "crown-ibp",
        })
    }
}

/// Runs `engine` for every objective row c_t.
pub fn certify<T: Scalar>(
    engine: Engine,
    net: &Network<T>,
    x: &Tensor<T>,
    spec: &PerturbationSpec,
    objectives: &[Tensor<T>],
) -> Result<Certification<T>> {
    match engine {
        Engine::Ibp => ibp_certify(net, x, spec, objectives),
        Engine::Fastlin => fastlin_certify(net, x, spec, objectives),
        Engine::Crown => crown_certify(net, x, spec, objectives, IntermediateBounds::Crown),
        Engine::CrownIbp => crown_certify(net, x, spec, objectives, IntermediateBounds::Ibp),
    }
}

/// δ_0* of the relaxed problem: the minimizer of c_tᵀ𝒲_{L:1} δ over the ball.
///
/// For ℓ∞ each coordinate moves to −ε when its coefficient is ≥ 0 and to +ε
/// otherwise. For ℓ2 it is −ε v/‖v‖₂, or zero when v = 0.
pub fn optimal_input_perturbation<T: Scalar>(target: &TargetRelaxation<T>, spec: &PerturbationSpec) -> Tensor<T> {
    let v = &target.input_coef;
    match spec.norm {
        Norm::Linf => v.map(|c| {
            if c.value() >= 0.0 {
                T::from_f64(-spec.eps)
            } else {
                T::from_f64(spec.eps)
            }
        }),
        Norm::L2 => {
            let n = Norm::L2.dual(v.data());
            if n.value() > 0.0 {
                let k = T::from_f64(-spec.eps) / n;
                v.map(|c| c * k)
            } else {
                Tensor::zeros(v.shape())
            }
        }
    }
}

/// Whether intercept δ*_ij sits at its upper value δ̄_ij.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterceptBranch {
    /// δ*_ij = 0 (backward coefficient ≥ 0).
    Zero,
    /// δ*_ij = δ̄_ij (backward coefficient < 0).
    Upper,
}

pub fn intercept_branch(coef: f64) -> InterceptBranch {
    if coef >= 0.0 {
        InterceptBranch::Zero
    } else {
        InterceptBranch::Upper
    }
}

/// δ*_i for every hidden layer: 0 where the backward coefficient
/// (c_tᵀ𝒲_{L:i+1})_j ≥ 0, δ̄_ij otherwise.
pub fn optimal_intercepts<T: Scalar>(relax: &LinearRelaxation<T>, target: &TargetRelaxation<T>) -> Vec<Tensor<T>> {
    relax
        .layers
        .iter()
        .zip(&target.layer_coefs)
        .map(|(layer, coef)| {
            let data = layer
                .intercept_bounds
                .data()
                .iter()
                .zip(coef.data())
                .zip(&layer.groups)
                .map(|((&ub, c), g)| match (g, intercept_branch(c.value())) {
                    (NeuronGroup::Unstable, InterceptBranch::Upper) => ub,
                    _ => T::zero(),
                })
                .collect::<Vec<_>>();
            Tensor::from_parts(vec![data.len()], data)
        })
        .collect()
}

/// Σ_j δ̄_j · min(coef_j, 0) over the unstable neurons of one layer.
pub(crate) fn intercept_penalty<T: Scalar>(layer: &LayerRelaxation<T>, coef: &[T]) -> T {
    let mut acc = T::zero();
    for (j, g) in layer.groups.iter().enumerate() {
        if *g == NeuronGroup::Unstable && coef[j].value() < 0.0 {
            acc = acc + layer.intercept_bounds.data()[j] * coef[j];
        }
    }
    acc
}
