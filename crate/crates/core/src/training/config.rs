use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ToyDatasetSpec;
use crate::bounds::{Engine, PerturbationSpec};
use crate::data::parse_eps;
use crate::error::{Error, Result};
use crate::tensor::Norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Where training samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Toy(ToyDatasetSpec),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub norm: Norm,
    /// Final perturbation radius, as a number or a string such as "8/255".
    #[serde(deserialize_with = "radius")]
    pub eps: f64,
    /// Radius at epoch 0; defaults to eps / 100.
    #[serde(deserialize_with = "optional_radius")]
    pub eps_start: Option<f64>,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_every`
    /// epochs after warm-up (0 disables decay).
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Samples per gradient chunk; chunks run in parallel and are reduced in
    /// order, so results do not depend on the thread count.
    pub chunk_size: usize,
    pub engine: Engine,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Number of logits; defaults to 1 for 0/1 labels, else max label + 1.
    pub outputs: Option<usize>,
    /// PGD steps used for the per-epoch attack error (0 skips the attack).
    pub eval_pgd_steps: usize,
    pub eval_pgd_restarts: usize,
    pub dataset: Option<DatasetSource>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Radius {
    Number(f64),
    Text(String),
}

impl Radius {
    fn resolve<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        let eps = match self {
            Radius::Number(v) => v,
            Radius::Text(s) => parse_eps(&s).map_err(E::custom)?,
        };
        if eps.is_finite() && eps >= 0.0 {
            Ok(eps)
        } else {
            Err(E::custom(format!("radius must be finite and non-negative, got {eps}")))
        }
    }
}

fn radius<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Radius::deserialize(d)?.resolve()
}

fn optional_radius<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<Radius>::deserialize(d)?.map(Radius::resolve).transpose()
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            norm: Norm::Linf,
            eps: 0.1,
            eps_start: None,
            epochs: 60,
            warmup_epochs: 20,
            lambda: 0.0,
            gamma: 0.0,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            lr_decay: 0.5,
            lr_decay_every: 10,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 50,
            chunk_size: 16,
            engine: Engine::Fastlin,
            seed: 0,
            hidden: vec![8, 8],
            outputs: None,
            eval_pgd_steps: 20,
            eval_pgd_restarts: 1,
            dataset: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        PerturbationSpec::new(self.norm, self.eps)?;
        if let Some(e0) = self.eps_start {
            if !(e0 >= 0.0 && e0.is_finite()) {
                return bad(format!("eps_start must be finite and >= 0, got {e0}"));
            }
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return bad(format!("lambda and gamma must be >= 0, got {} and {}", self.lambda, self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.chunk_size == 0 {
            return bad("batch_size and chunk_size must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("at least one non-empty hidden layer is required".into());
        }
        if self.engine == Engine::Ibp {
            return bad("training needs a linear relaxation: use fastlin, crown or crown-ibp".into());
        }
        if let Some(DatasetSource::Toy(t)) = &self.dataset {
            t.validate()?;
        }
        Ok(())
    }

    pub fn eps_start(&self) -> f64 {
        self.eps_start.unwrap_or(0.01 * self.eps)
    }

    pub fn spec(&self, eps: f64) -> Result<PerturbationSpec> {
        PerturbationSpec::new(self.norm, eps)
    }
}

/// Per-epoch hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eps: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
}

/// Linear warm-up of ε (from its start value), λ and γ (from 0), then step
/// decay of the learning rate.
pub fn schedule(epoch: usize, cfg: &TrainConfig) -> Schedule {
    let w = cfg.warmup_epochs;
    let frac = if w == 0 { 1.0 } else { (epoch as f64 / w as f64).min(1.0) };
    let e0 = cfg.eps_start();
    let decays = match cfg.lr_decay_every {
        0 => 0,
        k => epoch.saturating_sub(w) / k,
    };
    Schedule {
        eps: if frac >= 1.0 { cfg.eps } else { e0 + (cfg.eps - e0) * frac },
        lambda: cfg.lambda * frac,
        gamma: cfg.gamma * frac,
        lr: cfg.lr * cfg.lr_decay.powi(decays as i32),
    }
}
