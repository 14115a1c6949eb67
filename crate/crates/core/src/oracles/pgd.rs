use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bounds::{fastlin_certify, optimal_input_perturbation, PerturbationSpec};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::tensor::{Norm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub steps: usize,
    /// Defaults to ε/10.
    pub step_size: Option<f64>,
    /// Restart 0 starts from δ0* of the Fast-Lin relaxation, the rest from
    /// random points of the ball.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            step_size: None,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgdResult {
    /// Smallest margin seen over every iterate of every restart.
    pub margin: f64,
    pub delta: Tensor,
    pub restart: usize,
}

/// c_tᵀ h_L(z) and its gradient in z (the ReLU derivative is 0 at 0).
fn value_and_grad(net: &Network, z: &Tensor, c: &Tensor) -> Result<(f64, Tensor)> {
    let trace = net.forward(z)?;
    let value = trace.logits().dot(c)?;
    let mut g = c.clone();
    for i in (0..net.depth()).rev() {
        g = Tensor::vecmat(&g, &net.layers()[i].weights)?;
        if i > 0 {
            let pre = &trace.pre_activations[i - 1];
            g = g.zip_map(pre, "relu_mask", |gi, p| if p > 0.0 { gi } else { 0.0 })?;
        }
    }
    Ok((value, g))
}

fn random_start(rng: &mut ChaCha8Rng, spec: &PerturbationSpec, n: usize) -> Tensor {
    let e = spec.eps;
    let data = match spec.norm {
        Norm::Linf => (0..n).map(|_| rng.random_range(-1.0..=1.0) * e).collect(),
        Norm::L2 => {
            let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let len = Norm::L2.primal(&dir);
            let radius = e * rng.random::<f64>().powf(1.0 / n as f64);
            if len > 0.0 {
                dir.iter().map(|d| d * radius / len).collect()
            } else {
                vec![0.0; n]
            }
        }
    };
    Tensor::from_parts(vec![n], data)
}

fn project(delta: Tensor, spec: &PerturbationSpec) -> Tensor {
    let e = spec.eps;
    match spec.norm {
        Norm::Linf => delta.map(|d| d.clamp(-e, e)),
        Norm::L2 => {
            let n = Norm::L2.primal(delta.data());
            if n > e {
                delta.scale(e / n)
            } else {
                delta
            }
        }
    }
}

fn run(net: &Network, x: &Tensor, c: &Tensor, spec: &PerturbationSpec, start: Tensor, steps: usize, alpha: f64) -> Result<(f64, Tensor)> {
    let mut delta = project(start, spec);
    let mut best = (f64::INFINITY, delta.clone());
    for step in 0..=steps {
        let (value, g) = value_and_grad(net, &x.add(&delta)?, c)?;
        if value < best.0 {
            best = (value, delta.clone());
        }
        if step == steps {
            break;
        }
        let dir = match spec.norm {
            Norm::Linf => g.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }),
            Norm::L2 => {
                let n = Norm::L2.primal(g.data());
                if n > 0.0 {
                    g.scale(1.0 / n)
                } else {
                    break;
                }
            }
        };
        delta = project(delta.sub(&dir.scale(alpha))?, spec);
    }
    Ok(best)
}

/// Projected gradient descent on the margin: sign steps with box clipping for
/// ℓ∞, normalized steps with ball projection for ℓ2.
///
/// Each restart is seeded independently, so adding restarts never raises the
/// returned margin.
pub fn pgd_attack(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor, cfg: &PgdConfig) -> Result<PgdResult> {
    if cfg.steps == 0 || cfg.restarts == 0 {
        return Err(Error::Contract("PGD needs at least one step and one restart".into()));
    }
    let alpha = cfg.step_size.unwrap_or(spec.eps / 10.0);
    let first = {
        let cert = fastlin_certify(net, x, spec, std::slice::from_ref(c))?;
        let relax = cert.relaxation.as_ref().expect("fastlin carries a relaxation");
        optimal_input_perturbation(&relax.targets[0], spec)
    };
    let results: Vec<(f64, Tensor)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                first.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                random_start(&mut rng, spec, x.len())
            };
            run(net, x, c, spec, start, cfg.steps, alpha)
        })
        .collect::<Result<_>>()?;
    let (restart, (margin, delta)) = results
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1 .0 < a.1 .0 { b } else { a })
        .expect("at least one restart");
    Ok(PgdResult { margin, delta, restart })
}
