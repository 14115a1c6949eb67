use crate::bounds::{certify, Engine, PerturbationSpec};
use crate::error::Result;
use crate::model::{MarginSpec, Network};
use crate::scalar::{log1p_sum_exp, Scalar};
use crate::tensor::Tensor;
use crate::tightness::report_for_target;

/// Regularizer weights for one evaluation of the robust objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub gamma: f64,
}

/// One sample's contribution to the robust objective.
#[derive(Debug, Clone, Copy)]
pub struct SampleLoss<T> {
    pub total: T,
    pub cross_entropy: T,
    /// Σ_t d_t and Σ_t r_t (zero when both weights are zero and the
    /// indicators were not requested).
    pub d_sum: T,
    pub r_sum: T,
    /// min_t p_C*.
    pub worst_margin: f64,
}

/// Cross-entropy on the vector of negated margin bounds plus the weighted
/// tightness indicators, for a single labelled input.
///
/// The true class enters the cross-entropy with logit 0, so the term is
/// log(1 + Σ_{t≠y} exp(−p_t)). A single-output network uses the ±1 binary
/// objective.
pub fn sample_loss<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    label: usize,
    spec: &PerturbationSpec,
    engine: Engine,
    weights: LossWeights,
    indicators: bool,
) -> Result<SampleLoss<T>> {
    let targets = MarginSpec::all_targets(label, net.output_width())?;
    let objectives: Vec<Tensor<T>> = targets.iter().map(|t| t.objective_as()).collect();
    let cert = certify(engine, net, x, spec, &objectives)?;
    let negated: Vec<T> = cert.margins.iter().map(|&p| -p).collect();
    let cross_entropy = log1p_sum_exp(&negated);
    let worst_margin = cert.margins.iter().map(|p| p.value()).fold(f64::INFINITY, f64::min);

    let mut d_sum = T::zero();
    let mut r_sum = T::zero();
    let mut total = cross_entropy;
    if indicators || weights.lambda != 0.0 || weights.gamma != 0.0 {
        for (t, c) in objectives.iter().enumerate() {
            let rep = report_for_target(net, x, spec, &cert, t, c)?;
            d_sum = d_sum + rep.d;
            r_sum = r_sum + rep.r;
        }
        if weights.lambda != 0.0 {
            total = total + d_sum.scale(weights.lambda);
        }
        if weights.gamma != 0.0 {
            total = total + r_sum.scale(weights.gamma);
        }
    }
    Ok(SampleLoss {
        total,
        cross_entropy,
        d_sum,
        r_sum,
        worst_margin,
    })
}

/// Mean robust objective over a batch.
pub fn robust_loss<T: Scalar>(
    net: &Network<T>,
    batch: &[(Tensor<T>, usize)],
    spec: &PerturbationSpec,
    weights: LossWeights,
    engine: Engine,
) -> Result<T> {
    let mut parts = Vec::with_capacity(batch.len());
    for (x, y) in batch {
        parts.push(sample_loss(net, x, *y, spec, engine, weights, false)?.total);
    }
    Ok(T::sum(&parts) / T::from_f64(batch.len().max(1) as f64))
}
