use super::{
    ibp_bounds, ibp_first_layer, BoundState, Certification, Engine, LayerBounds, LayerRelaxation, LinearRelaxation,
    NeuronGroup, PerturbationSpec, TargetRelaxation,
};
use crate::error::Result;
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Where CROWN takes the hidden-layer bounds from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntermediateBounds {
    /// Backward passes with rows ±e_j for every hidden neuron.
    Crown,
    /// Interval bounds (CROWN-IBP).
    Ibp,
}

/// Everything the backward pass needs about one hidden layer.
struct Relaxed<T> {
    base: LayerRelaxation<T>,
    /// Lower-line slope: 1 if x̄ ≥ −x̲, else 0.
    lower_slopes: Vec<bool>,
}

impl<T: Scalar> Relaxed<T> {
    fn new(b: &LayerBounds<T>) -> Self {
        let lower_slopes = b
            .lower
            .data()
            .iter()
            .zip(b.upper.data())
            .map(|(l, u)| u.value() >= -l.value())
            .collect();
        Self {
            base: LayerRelaxation::from_bounds(b),
            lower_slopes,
        }
    }
}

struct Backward<T> {
    /// Bias contributions only: the relaxed linear network at δ = 0.
    bias_const: T,
    /// Intercept contributions Σ λ_j δ̄_j over neurons using the upper line.
    intercepts: T,
    input_coef: Tensor<T>,
    /// Coefficient on the relaxation offset of each hidden layer below the start.
    layer_coefs: Vec<Tensor<T>>,
    slopes: Vec<Tensor<T>>,
}

/// Runs the backward pass for objective row `c` on x_k (0-based layer `k`).
fn backward<T: Scalar>(
    net: &Network<T>,
    transposed: &[Tensor<T>],
    relax: &[Relaxed<T>],
    k: usize,
    c: &Tensor<T>,
) -> Result<Backward<T>> {
    let layers = net.layers();
    let mut lambda = transposed[k].matvec(c)?;
    let mut bias_const = c.dot(&layers[k].bias)?;
    let mut intercept_terms = Vec::new();
    let mut intercept_bounds = Vec::new();
    let mut layer_coefs = vec![Tensor::zeros(&[0]); k];
    let mut slopes = vec![Tensor::zeros(&[0]); k];
    for i in (0..k).rev() {
        let r = &relax[i];
        let mut d = Vec::with_capacity(lambda.len());
        for (j, &lam) in lambda.data().iter().enumerate() {
            let slope = match r.base.groups[j] {
                NeuronGroup::Inactive => T::zero(),
                NeuronGroup::Active => T::one(),
                NeuronGroup::Unstable if lam.value() < 0.0 => {
                    intercept_terms.push(lam);
                    intercept_bounds.push(r.base.intercept_bounds.data()[j]);
                    r.base.slopes.data()[j]
                }
                NeuronGroup::Unstable if r.lower_slopes[j] => T::one(),
                NeuronGroup::Unstable => T::zero(),
            };
            d.push(slope);
        }
        let d = Tensor::from_parts(vec![d.len()], d);
        let mu = lambda.hadamard(&d)?;
        bias_const = bias_const + mu.dot(&layers[i].bias)?;
        layer_coefs[i] = lambda;
        slopes[i] = d;
        lambda = transposed[i].matvec(&mu)?;
    }
    Ok(Backward {
        bias_const,
        intercepts: T::dot(&intercept_terms, &intercept_bounds),
        input_coef: lambda,
        layer_coefs,
        slopes,
    })
}

/// CROWN margin lower bounds.
///
/// For each objective the backward pass picks, neuron by neuron, the upper
/// relaxation line when the accumulated coefficient is negative and the
/// adaptive lower line otherwise.
pub fn crown_certify<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    spec: &PerturbationSpec,
    objectives: &[Tensor<T>],
    intermediate: IntermediateBounds,
) -> Result<Certification<T>> {
    let layers = net.layers();
    let depth = layers.len();
    let eps = T::from_f64(spec.eps);
    let transposed: Vec<Tensor<T>> = layers.iter().map(|l| l.weights.transpose()).collect();
    let finish = |b: &Backward<T>| -> Result<T> {
        Ok(b.bias_const + b.intercepts + b.input_coef.dot(x)? - spec.norm.dual(b.input_coef.data()) * eps)
    };

    let mut relax: Vec<Relaxed<T>> = Vec::with_capacity(depth - 1);
    let bounds = match intermediate {
        IntermediateBounds::Ibp => {
            let state = ibp_bounds(net, x, spec)?;
            relax.extend(state.layers[..depth - 1].iter().map(Relaxed::new));
            state
        }
        IntermediateBounds::Crown => {
            let mut out = vec![ibp_first_layer(&layers[0], x, spec)?];
            relax.push(Relaxed::new(&out[0]));
            for (k, layer) in layers.iter().enumerate().take(depth).skip(1) {
                let width = layer.out_width();
                let mut lower = Vec::with_capacity(width);
                let mut upper = Vec::with_capacity(width);
                for j in 0..width {
                    let mut e = vec![T::zero(); width];
                    e[j] = T::one();
                    let pos = Tensor::from_parts(vec![width], e.clone());
                    e[j] = -T::one();
                    let neg = Tensor::from_parts(vec![width], e);
                    lower.push(finish(&backward(net, &transposed, &relax, k, &pos)?)?);
                    upper.push(-finish(&backward(net, &transposed, &relax, k, &neg)?)?);
                }
                let b = LayerBounds {
                    lower: Tensor::from_parts(vec![width], lower),
                    upper: Tensor::from_parts(vec![width], upper),
                };
                if k < depth - 1 {
                    relax.push(Relaxed::new(&b));
                }
                out.push(b);
            }
            BoundState { layers: out }
        }
    };

    let mut targets = Vec::with_capacity(objectives.len());
    let mut margins = Vec::with_capacity(objectives.len());
    for c in objectives {
        let b = backward(net, &transposed, &relax, depth - 1, c)?;
        let bound = finish(&b)?;
        margins.push(bound);
        targets.push(TargetRelaxation {
            clean_value: b.bias_const + b.input_coef.dot(x)?,
            input_coef: b.input_coef,
            layer_coefs: b.layer_coefs,
            slopes: b.slopes,
            bound,
        });
    }

    let engine = match intermediate {
        IntermediateBounds::Crown => Engine::Crown,
        IntermediateBounds::Ibp => Engine::CrownIbp,
    };
    Ok(Certification {
        engine,
        bounds,
        relaxation: Some(LinearRelaxation {
            layers: relax.into_iter().map(|r| r.base).collect(),
            input_maps: Vec::new(),
            clean_values: Vec::new(),
            targets,
        }),
        margins,
    })
}
