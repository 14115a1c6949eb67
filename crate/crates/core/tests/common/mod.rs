#![allow(dead_code)]

use certbound::bounds::PerturbationSpec;
use certbound::{DenseLayer, Network, Norm, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> Tensor {
    Tensor::vector(x.to_vec()).unwrap()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Dense ReLU network with the given widths, weights in [−1, 1] and biases
/// in [−0.5, 0.5].
pub fn random_net(rng: &mut ChaCha8Rng, widths: &[usize]) -> Network {
    let layers = widths
        .windows(2)
        .map(|p| {
            let w = Tensor::matrix(p[1], p[0], uniform_vec(rng, p[0] * p[1], 1.0)).unwrap();
            let b = Tensor::vector(uniform_vec(rng, p[1], 0.5)).unwrap();
            DenseLayer::new(w, b).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Random widths: input `input`, 1 to `max_hidden` hidden layers of width
/// up to `max_width`, and `outputs` logits.
pub fn random_widths(rng: &mut ChaCha8Rng, input: usize, max_hidden: usize, max_width: usize, outputs: usize) -> Vec<usize> {
    let hidden = rng.random_range(1..=max_hidden);
    let mut w = vec![input];
    for _ in 0..hidden {
        w.push(rng.random_range(1..=max_width));
    }
    w.push(outputs);
    w
}

/// Objective e_y − e_t for a random pair, or ±1 for a single output.
pub fn random_objective(rng: &mut ChaCha8Rng, outputs: usize) -> Tensor {
    if outputs == 1 {
        return v(&[if rng.random_bool(0.5) { 1.0 } else { -1.0 }]);
    }
    let y = rng.random_range(0..outputs);
    let mut t = rng.random_range(0..outputs - 1);
    if t >= y {
        t += 1;
    }
    let mut c = vec![0.0; outputs];
    c[y] = 1.0;
    c[t] = -1.0;
    v(&c)
}

/// A uniform point of the ℓ∞ box or the ℓ2 ball.
pub fn random_feasible(rng: &mut ChaCha8Rng, spec: &PerturbationSpec, n: usize) -> Vec<f64> {
    match spec.norm {
        Norm::Linf => uniform_vec(rng, n, spec.eps),
        Norm::L2 => loop {
            let d = uniform_vec(rng, n, spec.eps);
            if Norm::L2.primal(&d) <= spec.eps {
                break d;
            }
        },
    }
}

/// A corner of the box (or a point of the sphere), where minima often sit.
pub fn random_extreme(rng: &mut ChaCha8Rng, spec: &PerturbationSpec, n: usize) -> Vec<f64> {
    match spec.norm {
        Norm::Linf => (0..n).map(|_| if rng.random_bool(0.5) { spec.eps } else { -spec.eps }).collect(),
        Norm::L2 => {
            let d = uniform_vec(rng, n, 1.0);
            let len = Norm::L2.primal(&d).max(1e-300);
            d.iter().map(|x| x * spec.eps / len * (1.0 - 1e-15)).collect()
        }
    }
}

pub fn add(x: &Tensor, d: &[f64]) -> Tensor {
    Tensor::vector(x.data().iter().zip(d).map(|(a, b)| a + b).collect()).unwrap()
}
