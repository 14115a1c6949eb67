use super::OptimizerKind;
use crate::model::Network;
use crate::tensor::Tensor;

/// First-order optimizer state over a network's parameter list.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: i32,
    },
    Sgd {
        momentum: f64,
        weight_decay: f64,
        velocity: Vec<Vec<f64>>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &Network, momentum: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = net.parameters().iter().map(|p| vec![0.0; p.len()]).collect();
        match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay,
                m: zeros.clone(),
                v: zeros,
                t: 0,
            },
            OptimizerKind::Sgd => Optimizer::Sgd {
                momentum,
                weight_decay,
                velocity: zeros,
            },
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Tensor], lr: f64) {
        match self {
            Optimizer::Adam {
                beta1,
                beta2,
                eps,
                weight_decay,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                net.update_parameters(|k, w| {
                    let g = grads[k].data();
                    for j in 0..w.len() {
                        let gj = g[j] + *weight_decay * w[j];
                        m[k][j] = *beta1 * m[k][j] + (1.0 - *beta1) * gj;
                        v[k][j] = *beta2 * v[k][j] + (1.0 - *beta2) * gj * gj;
                        let mh = m[k][j] / c1;
                        let vh = v[k][j] / c2;
                        w[j] -= lr * mh / (vh.sqrt() + *eps);
                    }
                });
            }
            Optimizer::Sgd {
                momentum,
                weight_decay,
                velocity,
            } => {
                net.update_parameters(|k, w| {
                    let g = grads[k].data();
                    for j in 0..w.len() {
                        let gj = g[j] + *weight_decay * w[j];
                        velocity[k][j] = *momentum * velocity[k][j] + gj;
                        w[j] -= lr * velocity[k][j];
                    }
                });
            }
        }
    }
}
