//! Tightness indicators of a relaxation at its own optimum.
//!
//! Given δ0* of the relaxed problem, `d` compares the true network at x + δ0*
//! with the relaxed bound p_C*, and `r` measures how far each unstable
//! pre-activation at x + δ0* sits from the set where the relaxation line
//! touches the ReLU for the intercept the relaxed optimum picked. When every
//! such distance is zero the relaxation is exact and d = 0.

use crate::bounds::{
    fastlin_certify, intercept_branch, optimal_input_perturbation, Certification, InterceptBranch, NeuronGroup,
    PerturbationSpec,
};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Distance of one unstable neuron from its touching set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronResidual {
    /// 0-based hidden layer.
    pub layer: usize,
    pub index: usize,
    pub residual: f64,
    pub branch: InterceptBranch,
}

#[derive(Debug, Clone)]
pub struct TightnessReport<T = f64> {
    /// p_C*
    pub p_c: T,
    /// p'_O = c_tᵀ h_L(x + δ0*)
    pub p_o_feasible: T,
    pub d: T,
    pub r: T,
    pub delta0: Tensor<T>,
    pub residuals: Vec<NeuronResidual>,
}

impl<T: Scalar> TightnessReport<T> {
    pub fn detach(&self) -> TightnessReport<f64> {
        TightnessReport {
            p_c: self.p_c.value(),
            p_o_feasible: self.p_o_feasible.value(),
            d: self.d.value(),
            r: self.r.value(),
            delta0: self.delta0.detach(),
            residuals: self.residuals.clone(),
        }
    }

    pub fn unstable_count(&self) -> usize {
        self.residuals.len()
    }
}

/// d and r for objective `t` of an existing certification.
///
/// The certification must carry a linear relaxation (Fast-Lin or CROWN).
/// Residuals use the relaxation's own intercept choice: |x'| when δ* = 0 and
/// min(|x' − x̲|, |x' − x̄|) when δ* = δ̄.
pub fn report_for_target<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    spec: &PerturbationSpec,
    cert: &Certification<T>,
    t: usize,
    c: &Tensor<T>,
) -> Result<TightnessReport<T>> {
    let relax = cert
        .relaxation
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("{} has no linear relaxation", cert.engine)))?;
    let target = relax
        .targets
        .get(t)
        .ok_or_else(|| Error::Contract(format!("objective {t} out of range")))?;
    let delta0 = optimal_input_perturbation(target, spec);
    let trace = net.forward(&x.add(&delta0)?)?;
    let p_o_feasible = trace.logits().dot(c)?;
    let p_c = target.bound;

    let mut residuals = Vec::new();
    let mut terms = Vec::new();
    for (i, (layer, coef)) in relax.layers.iter().zip(&target.layer_coefs).enumerate() {
        let pre = trace.pre_activations[i].data();
        let bounds = &cert.bounds.layers[i];
        for (j, g) in layer.groups.iter().enumerate() {
            if *g != NeuronGroup::Unstable {
                continue;
            }
            let xp = pre[j];
            let branch = intercept_branch(coef.data()[j].value());
            let res = match branch {
                InterceptBranch::Zero => xp.abs(),
                InterceptBranch::Upper => {
                    (xp - bounds.lower.data()[j]).abs().min_first((xp - bounds.upper.data()[j]).abs())
                }
            };
            residuals.push(NeuronResidual {
                layer: i,
                index: j,
                residual: res.value(),
                branch,
            });
            terms.push(res);
        }
    }
    let r = if terms.is_empty() {
        T::zero()
    } else {
        T::sum(&terms) / T::from_f64(terms.len() as f64)
    };
    Ok(TightnessReport {
        p_c,
        p_o_feasible,
        d: p_o_feasible - p_c,
        r,
        delta0,
        residuals,
    })
}

/// Fast-Lin d and r for a single objective row.
pub fn tightness_report(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor) -> Result<TightnessReport> {
    let cert = fastlin_certify(net, x, spec, std::slice::from_ref(c))?;
    report_for_target(net, x, spec, &cert, 0, c)
}

/// Returns (d, p'_O, p_C*, δ0*).
pub fn compute_d(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor) -> Result<(f64, f64, f64, Tensor)> {
    let rep = tightness_report(net, x, spec, c)?;
    Ok((rep.d, rep.p_o_feasible, rep.p_c, rep.delta0))
}

/// Returns r and the per-neuron residuals.
pub fn compute_r(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor) -> Result<(f64, Vec<NeuronResidual>)> {
    let rep = tightness_report(net, x, spec, c)?;
    Ok((rep.r, rep.residuals))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every residual is within tolerance and |p'_O − p_C*| is within the
    /// bound this implies.
    Tight { gap: f64 },
    /// Some residuals exceed the tolerance; nothing is claimed about the gap.
    Unverified { violations: Vec<NeuronResidual> },
}

impl Verdict {
    pub fn is_tight(&self) -> bool {
        matches!(self, Verdict::Tight { .. })
    }
}

/// Executable form of the optimality-matching argument.
///
/// A residual of at most `tol` moves each unstable neuron's output by at most
/// `tol` away from the relaxed line, so the final gap is at most
/// ‖c‖₁ · tol · Σ_{k≥2} Π_{m≥k} ‖W_m‖_{∞→∞}. Exceeding that is reported as an
/// internal error.
pub fn verify_tightness(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor, tol: f64) -> Result<Verdict> {
    let rep = tightness_report(net, x, spec, c)?;
    let violations: Vec<_> = rep.residuals.iter().copied().filter(|n| n.residual > tol).collect();
    if !violations.is_empty() {
        return Ok(Verdict::Unverified { violations });
    }
    let gap = (rep.p_o_feasible - rep.p_c).abs();
    let c1: f64 = c.data().iter().map(|v| v.abs()).sum();
    let rounding = 1e-12 * (1.0 + rep.p_o_feasible.abs() + rep.p_c.abs()) * net.depth() as f64;
    let allowed = c1 * tol * net.deviation_gain() + rounding;
    if gap > allowed {
        return Err(Error::Internal(format!(
            "residuals within {tol:e} but |p'_O - p_C*| = {gap:e} exceeds {allowed:e}"
        )));
    }
    Ok(Verdict::Tight { gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn toy_example_is_tight() {
        let net = Network::toy_max_margin();
        let spec = PerturbationSpec::linf(0.2).unwrap();
        let x = v(&[0.1, 0.42]);
        let c = v(&[1.0]);
        let (d, p_o, p_c, delta0) = compute_d(&net, &x, &spec, &c).unwrap();
        assert!((p_o + 0.08).abs() < 1e-15);
        assert!((p_c + 0.08).abs() < 1e-15);
        assert!(d.abs() < 1e-15);
        assert_eq!(delta0.data(), &[0.2, -0.2]);
        let (r, res) = compute_r(&net, &x, &spec, &c).unwrap();
        assert!(r.abs() < 1e-15);
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|n| n.branch == InterceptBranch::Upper));
        assert!(verify_tightness(&net, &x, &spec, &c, 1e-12).unwrap().is_tight());
    }

    #[test]
    fn zero_radius_is_vacuously_tight() {
        let net = Network::toy_max_margin();
        let spec = PerturbationSpec::linf(0.0).unwrap();
        let rep = tightness_report(&net, &v(&[0.05, 0.7]), &spec, &v(&[1.0])).unwrap();
        assert_eq!(rep.d, 0.0);
        assert_eq!(rep.r, 0.0);
        assert!(rep.residuals.is_empty());
        assert!(verify_tightness(&net, &v(&[0.05, 0.7]), &spec, &v(&[1.0]), 0.0)
            .unwrap()
            .is_tight());
    }

    #[test]
    fn engine_without_relaxation_is_rejected() {
        let net = Network::toy_max_margin();
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let x = v(&[0.1, 0.42]);
        let c = v(&[1.0]);
        let cert = crate::bounds::ibp_certify(&net, &x, &spec, std::slice::from_ref(&c)).unwrap();
        assert!(matches!(
            report_for_target(&net, &x, &spec, &cert, 0, &c),
            Err(Error::Contract(_))
        ));
    }
}
