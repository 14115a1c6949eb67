//! Certified training on the regularized robust objective.
//!
//! Each step evaluates the bound engine on [`Var`] scalars, so the loss is
//! differentiated through the relaxation itself (slopes, bounds, δ0*). The
//! batch is cut into fixed-size chunks that run on separate tapes in
//! parallel; chunk gradients are summed in chunk order, which keeps runs
//! bitwise reproducible for a fixed seed.

mod config;
mod loss;
mod optim;
mod toy;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{schedule, DatasetSource, OptimizerKind, Schedule, TrainConfig};
pub use loss::{robust_loss, sample_loss, LossWeights, SampleLoss};
pub use optim::Optimizer;
pub use toy::{in_s0, in_s1, make_toy_dataset, sample_s1, ToyDatasetSpec};

use crate::autodiff::{Tape, Var};
use crate::bounds::{Engine, PerturbationSpec};
use crate::data::{load_samples, Sample};
use crate::error::{Error, Result};
use crate::model::{DenseLayer, MarginSpec, Network};
use crate::oracles::{pgd_attack, PgdConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub eps: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
    pub std_err: f64,
    pub cert_err: f64,
    /// Absent when the attack is disabled.
    pub pgd_err: Option<f64>,
    /// Mean over samples of Σ_t d_t.
    pub mean_d: f64,
    /// Mean over samples of Σ_t r_t.
    pub mean_r: f64,
    /// Mean training objective over the epoch's steps.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub metrics: Vec<EpochMetrics>,
}

/// Loads or generates the configured dataset.
pub fn load_dataset(source: &DatasetSource) -> Result<Vec<Sample>> {
    match source {
        DatasetSource::Toy(spec) => make_toy_dataset(spec),
        DatasetSource::File { path } => load_samples(path),
    }
}

/// Kaiming-normal weights and zero biases.
pub fn init_network(widths: &[usize], rng: &mut ChaCha8Rng) -> Result<Network> {
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for pair in widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
        layers.push(DenseLayer::new(
            Tensor::matrix(fan_out, fan_in, w)?,
            Tensor::zeros(&[fan_out]),
        )?);
    }
    Network::new(layers)
}

fn output_width(cfg: &TrainConfig, samples: &[Sample]) -> usize {
    cfg.outputs.unwrap_or_else(|| {
        let max = samples.iter().map(|s| s.y).max().unwrap_or(0);
        if max <= 1 {
            1
        } else {
            max + 1
        }
    })
}

/// Sum of the objective over `chunk` and its gradient for every parameter.
fn chunk_gradient(
    net: &Network,
    chunk: &[&Sample],
    spec: &PerturbationSpec,
    engine: Engine,
    weights: LossWeights,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let nv = net.on_tape(&tape);
    let mut parts = Vec::with_capacity(chunk.len());
    for s in chunk {
        let x = s.input()?.map(Var::constant);
        parts.push(sample_loss(&nv, &x, s.y, spec, engine, weights, false)?.total);
    }
    let total = Var::sum(&parts);
    let grads = tape.gradient(total);
    Ok((total.value(), nv.parameters().into_iter().map(|p| grads.tensor(p)).collect()))
}

/// Mean objective over `batch` and its gradient.
pub fn batch_gradient(
    net: &Network,
    batch: &[&Sample],
    spec: &PerturbationSpec,
    engine: Engine,
    weights: LossWeights,
    chunk_size: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let parts: Vec<(f64, Vec<Tensor>)> = batch
        .par_chunks(chunk_size.max(1))
        .map(|chunk| chunk_gradient(net, chunk, spec, engine, weights))
        .collect::<Result<_>>()?;
    let n = batch.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads: Vec<Tensor> = net.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for (l, g) in parts {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            *acc = acc.add(gi)?;
        }
    }
    Ok((loss / n, grads.into_iter().map(|g| g.scale(1.0 / n)).collect()))
}

/// Aggregate certification statistics of `net` on `samples`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub std_err: f64,
    pub cert_err: f64,
    pub pgd_err: Option<f64>,
    pub mean_d: f64,
    pub mean_r: f64,
}

pub fn evaluate(
    net: &Network,
    samples: &[Sample],
    spec: &PerturbationSpec,
    engine: Engine,
    pgd: Option<PgdConfig>,
) -> Result<Evaluation> {
    let none = LossWeights { lambda: 0.0, gamma: 0.0 };
    struct Row {
        wrong: bool,
        open: bool,
        attacked: bool,
        d: f64,
        r: f64,
    }
    let rows: Vec<Row> = samples
        .par_iter()
        .map(|s| -> Result<_> {
            let x = s.input()?;
            let wrong = net.predict(&x)? != s.y;
            let l = sample_loss(net, &x, s.y, spec, engine, none, true)?;
            let attacked = match pgd {
                Some(cfg) => {
                    let mut hit = wrong;
                    for t in MarginSpec::all_targets(s.y, net.output_width())? {
                        hit |= pgd_attack(net, &x, spec, t.objective(), &cfg)?.margin < 0.0;
                    }
                    hit
                }
                None => false,
            };
            Ok(Row {
                wrong,
                open: l.worst_margin <= 0.0,
                attacked,
                d: l.d_sum,
                r: l.r_sum,
            })
        })
        .collect::<Result<_>>()?;
    let n = samples.len().max(1) as f64;
    let frac = |f: fn(&Row) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(Evaluation {
        std_err: frac(|r| r.wrong),
        cert_err: frac(|r| r.open),
        pgd_err: pgd.map(|_| frac(|r| r.attacked)),
        mean_d: rows.iter().map(|r| r.d).sum::<f64>() / n,
        mean_r: rows.iter().map(|r| r.r).sum::<f64>() / n,
    })
}

/// Trains a fresh network on `samples`; `on_epoch` sees each metrics record
/// as soon as it is computed.
pub fn train_with(cfg: &TrainConfig, samples: &[Sample], mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let input = samples[0].x.len();
    let mut widths = vec![input];
    widths.extend(&cfg.hidden);
    widths.push(output_width(cfg, samples));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = init_network(&widths, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, &net, cfg.momentum, cfg.weight_decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let pgd = (cfg.eval_pgd_steps > 0).then(|| PgdConfig {
        steps: cfg.eval_pgd_steps,
        restarts: cfg.eval_pgd_restarts.max(1),
        seed: cfg.seed,
        ..PgdConfig::default()
    });
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let sched = schedule(epoch, cfg);
        let spec = cfg.spec(sched.eps)?;
        let weights = LossWeights {
            lambda: sched.lambda,
            gamma: sched.gamma,
        };
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let (loss, grads) = batch_gradient(&net, &batch, &spec, cfg.engine, weights, cfg.chunk_size)?;
            if !loss.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, step });
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut net, &grads, sched.lr);
        }
        let eval = evaluate(&net, samples, &spec, cfg.engine, pgd)?;
        let record = EpochMetrics {
            epoch,
            eps: sched.eps,
            lambda: sched.lambda,
            gamma: sched.gamma,
            lr: sched.lr,
            std_err: eval.std_err,
            cert_err: eval.cert_err,
            pgd_err: eval.pgd_err,
            mean_d: eval.mean_d,
            mean_r: eval.mean_r,
            loss: loss_sum / samples.len() as f64,
        };
        on_epoch(&record);
        metrics.push(record);
    }
    Ok(TrainOutcome { network: net, metrics })
}

pub fn train(cfg: &TrainConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    train_with(cfg, samples, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            eps: 0.05,
            epochs: 3,
            warmup_epochs: 2,
            lambda: 5e-3,
            gamma: 0.5,
            batch_size: 20,
            chunk_size: 4,
            hidden: vec![6],
            eval_pgd_steps: 5,
            lr: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data = make_toy_dataset(&ToyDatasetSpec { b: 0.3, n: 60, seed: 3 }).unwrap();
        let a = train(&small_cfg(), &data).unwrap();
        let b = train(&small_cfg(), &data).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.len(), 3);
        assert_eq!(a.metrics[2].eps, 0.05);
    }

    #[test]
    fn chunking_does_not_change_the_gradient_much() {
        let data = make_toy_dataset(&ToyDatasetSpec { b: 0.3, n: 24, seed: 5 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = init_network(&[2, 5, 1], &mut rng).unwrap();
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let batch: Vec<&Sample> = data.iter().collect();
        let w = LossWeights { lambda: 0.1, gamma: 0.2 };
        let (l1, g1) = batch_gradient(&net, &batch, &spec, Engine::Fastlin, w, 1).unwrap();
        let (l2, g2) = batch_gradient(&net, &batch, &spec, Engine::Fastlin, w, 24).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn zero_weights_match_unregularized_gradient() {
        let data = make_toy_dataset(&ToyDatasetSpec { b: 0.3, n: 10, seed: 9 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = init_network(&[2, 4, 1], &mut rng).unwrap();
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let batch: Vec<&Sample> = data.iter().collect();
        let zero = LossWeights { lambda: 0.0, gamma: 0.0 };
        let (_, g) = batch_gradient(&net, &batch, &spec, Engine::Fastlin, zero, 4).unwrap();

        // Plain cross-entropy on the bound, built by hand on a fresh tape.
        let tape = Tape::new();
        let nv = net.on_tape(&tape);
        let mut parts = Vec::new();
        for s in &data {
            let x = s.input().unwrap().map(Var::constant);
            let c = MarginSpec::binary(s.y).unwrap().objective_as::<Var>();
            let cert = crate::bounds::fastlin_certify(&nv, &x, &spec, &[c]).unwrap();
            parts.push(crate::scalar::log1p_sum_exp(&[-cert.margins[0]]));
        }
        let total = Var::sum(&parts) / Var::constant(data.len() as f64);
        let grads = tape.gradient(total);
        for (p, gi) in nv.parameters().into_iter().zip(&g) {
            assert!(grads.tensor(p).max_abs_diff(gi) < 1e-15);
        }
    }
}
