use super::{BoundState, Certification, Engine, LayerBounds, PerturbationSpec};
use crate::error::Result;
use crate::model::{DenseLayer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Exact interval of the first layer over the ball: W x + b ± ε‖W_row‖_*.
///
/// This is ℓ1 rows for ℓ∞ balls and ℓ2 rows for ℓ2 balls.
pub fn ibp_first_layer<T: Scalar>(layer: &DenseLayer<T>, x: &Tensor<T>, spec: &PerturbationSpec) -> Result<LayerBounds<T>> {
    let center = layer.apply(x)?;
    let radius = layer.weights.row_dual_norms(spec.norm).scale(T::from_f64(spec.eps));
    LayerBounds::from_center_radius(&center, &radius)
}

/// Pushes the interval of layer `prev` through ReLU and `layer`, returning
/// the center and radius of the post-ReLU box as well.
fn propagate<T: Scalar>(prev: &LayerBounds<T>, layer: &DenseLayer<T>) -> Result<(Tensor<T>, Tensor<T>, LayerBounds<T>)> {
    let half = T::from_f64(0.5);
    let zl = prev.lower.relu();
    let zu = prev.upper.relu();
    let mid = zu.add(&zl)?.scale(half);
    let rad = zu.sub(&zl)?.scale(half);
    let center = layer.apply(&mid)?;
    let radius = layer.weights.abs().matvec(&rad)?;
    let bounds = LayerBounds::from_center_radius(&center, &radius)?;
    Ok((mid, rad, bounds))
}

/// Interval bounds for every layer.
pub fn ibp_bounds<T: Scalar>(net: &Network<T>, x: &Tensor<T>, spec: &PerturbationSpec) -> Result<BoundState<T>> {
    let layers = net.layers();
    let mut out = Vec::with_capacity(layers.len());
    out.push(ibp_first_layer(&layers[0], x, spec)?);
    for layer in &layers[1..] {
        let (_, _, b) = propagate(out.last().expect("non-empty"), layer)?;
        out.push(b);
    }
    Ok(BoundState { layers: out })
}

/// IBP margin bounds: the last linear layer is folded into each objective,
/// p = (cᵀW_L) μ + cᵀb_L − |cᵀW_L| r over the post-ReLU box (μ ± r).
pub fn ibp_certify<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    spec: &PerturbationSpec,
    objectives: &[Tensor<T>],
) -> Result<Certification<T>> {
    let bounds = ibp_bounds(net, x, spec)?;
    let depth = net.depth();
    let last = &net.layers()[depth - 1];
    let (mid, rad, _) = propagate(&bounds.layers[depth - 2], last)?;
    let mut margins = Vec::with_capacity(objectives.len());
    for c in objectives {
        let row = Tensor::vecmat(c, &last.weights)?;
        let p = row.dot(&mid)? + c.dot(&last.bias)? - row.abs().dot(&rad)?;
        margins.push(p);
    }
    Ok(Certification {
        engine: Engine::Ibp,
        bounds,
        relaxation: None,
        margins,
    })
}
