//! Fast-Lin by forward accumulation.
//!
//! Walking forward through the network we keep the equivalent linear map
//! 𝒲_{i:1}, the clean-path value g_i(x) and, for every earlier hidden layer
//! i', the map 𝒲_{i:i'+1} that carries that layer's intercept slack to x_i.
//! Each layer's bounds follow in closed form from these, which in turn fix
//! D_i and δ̄_i for the next step.

use super::{
    intercept_penalty, BoundState, Certification, Engine, LayerBounds, LayerRelaxation, LinearRelaxation,
    NeuronGroup, PerturbationSpec, TargetRelaxation,
};
use crate::error::Result;
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct Accumulator<T> {
    /// 𝒲_{i:1}
    input_map: Tensor<T>,
    /// g_i(x)
    clean: Tensor<T>,
    /// 𝒲_{i:i'+1} for i' = 1..i−1
    hidden_maps: Vec<Tensor<T>>,
}

impl<T: Scalar> Accumulator<T> {
    fn bounds(&self, relax: &[LayerRelaxation<T>], spec: &PerturbationSpec) -> LayerBounds<T> {
        let eps = T::from_f64(spec.eps);
        let width = self.clean.len();
        let mut lower = Vec::with_capacity(width);
        let mut upper = Vec::with_capacity(width);
        let mut lo_w = Vec::new();
        let mut lo_c = Vec::new();
        let mut up_w = Vec::new();
        let mut up_c = Vec::new();
        for r in 0..width {
            let g = self.clean.data()[r];
            let radius = spec.norm.dual(self.input_map.row(r)) * eps;
            lo_w.clear();
            lo_c.clear();
            up_w.clear();
            up_c.clear();
            for (layer, map) in relax.iter().zip(&self.hidden_maps) {
                let row = map.row(r);
                for (j, grp) in layer.groups.iter().enumerate() {
                    if *grp != NeuronGroup::Unstable {
                        continue;
                    }
                    let w = row[j];
                    let ub = layer.intercept_bounds.data()[j];
                    if w.value() < 0.0 {
                        lo_w.push(w);
                        lo_c.push(ub);
                    } else if w.value() > 0.0 {
                        up_w.push(w);
                        up_c.push(ub);
                    }
                }
            }
            lower.push(g - radius + T::dot(&lo_w, &lo_c));
            upper.push(g + radius + T::dot(&up_w, &up_c));
        }
        LayerBounds {
            lower: Tensor::from_parts(vec![width], lower),
            upper: Tensor::from_parts(vec![width], upper),
        }
    }
}

/// Fast-Lin bounds for every layer and margin lower bounds
///
/// p_C* = c_tᵀg_L(x) − ε‖c_tᵀ𝒲_{L:1}‖_* + Σ_i Σ_{j∈I_i} δ̄_ij · min((c_tᵀ𝒲_{L:i+1})_j, 0)
///
/// for each objective row c_t.
pub fn fastlin_certify<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    spec: &PerturbationSpec,
    objectives: &[Tensor<T>],
) -> Result<Certification<T>> {
    let layers = net.layers();
    let mut acc = Accumulator {
        input_map: layers[0].weights.clone(),
        clean: layers[0].apply(x)?,
        hidden_maps: Vec::new(),
    };
    let mut relax: Vec<LayerRelaxation<T>> = Vec::with_capacity(layers.len() - 1);
    let mut bounds = vec![acc.bounds(&relax, spec)];
    let mut input_maps = vec![acc.input_map.clone()];
    let mut clean_values = vec![acc.clean.clone()];

    for layer in &layers[1..] {
        let r = LayerRelaxation::from_bounds(bounds.last().expect("non-empty"));
        // W_{i+1} D_i
        let wd = layer.weights.scale_cols(&r.slopes)?;
        acc.input_map = wd.matmul(&acc.input_map)?;
        acc.clean = wd.matvec(&acc.clean)?.add(&layer.bias)?;
        let mut maps = Vec::with_capacity(acc.hidden_maps.len() + 1);
        for m in &acc.hidden_maps {
            maps.push(wd.matmul(m)?);
        }
        maps.push(layer.weights.clone());
        acc.hidden_maps = maps;
        relax.push(r);
        bounds.push(acc.bounds(&relax, spec));
        input_maps.push(acc.input_map.clone());
        clean_values.push(acc.clean.clone());
    }

    let eps = T::from_f64(spec.eps);
    let mut targets = Vec::with_capacity(objectives.len());
    let mut margins = Vec::with_capacity(objectives.len());
    for c in objectives {
        let input_coef = Tensor::vecmat(c, &acc.input_map)?;
        let clean_value = c.dot(&acc.clean)?;
        let layer_coefs = acc
            .hidden_maps
            .iter()
            .map(|m| Tensor::vecmat(c, m))
            .collect::<Result<Vec<_>>>()?;
        let mut bound = clean_value - spec.norm.dual(input_coef.data()) * eps;
        for (layer, coef) in relax.iter().zip(&layer_coefs) {
            bound = bound + intercept_penalty(layer, coef.data());
        }
        margins.push(bound);
        targets.push(TargetRelaxation {
            input_coef,
            clean_value,
            layer_coefs,
            slopes: relax.iter().map(|r| r.slopes.clone()).collect(),
            bound,
        });
    }

    Ok(Certification {
        engine: Engine::Fastlin,
        bounds: BoundState { layers: bounds },
        relaxation: Some(LinearRelaxation {
            layers: relax,
            input_maps,
            clean_values,
            targets,
        }),
        margins,
    })
}
