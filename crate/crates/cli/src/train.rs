use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use certbound::training::{load_dataset, train_with, DatasetSource, TrainConfig};

use crate::context;
use crate::TrainArgs;

/// Parses a TOML training configuration. Dataset paths are taken relative to
/// the configuration file, and `CERTBOUND_SEED` replaces every seed in it.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: TrainConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(DatasetSource::File { path: data }) = &mut cfg.dataset {
        if data.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            *data = base.join(&*data);
        }
    }
    if let Some(seed) = context::env_seed()? {
        cfg.seed = seed;
        if let Some(DatasetSource::Toy(toy)) = &mut cfg.dataset {
            toy.seed = seed;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_metrics_path(model: &Path) -> PathBuf {
    let mut name = model.file_stem().unwrap_or_default().to_os_string();
    name.push(".metrics.jsonl");
    model.with_file_name(name)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let source = cfg
        .dataset
        .as_ref()
        .context("the configuration has no [dataset] table")?;
    let samples = load_dataset(source).context("loading the training set")?;
    let metrics_path = args.metrics.unwrap_or_else(|| default_metrics_path(&args.out));
    let mut log = BufWriter::new(
        File::create(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?,
    );

    let mut write_err = None;
    let outcome = train_with(&cfg, &samples, |m| {
        eprintln!(
            "epoch {:>3}  eps {:.4}  loss {:.4}  std {:.3}  cert {:.3}  d {:.4}  r {:.4}",
            m.epoch, m.eps, m.loss, m.std_err, m.cert_err, m.mean_d, m.mean_r
        );
        let line = serde_json::to_string(m).map_err(anyhow::Error::from);
        let res = line.and_then(|l| writeln!(log, "{l}").and_then(|_| log.flush()).map_err(Into::into));
        if let Err(e) = res {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e.context(format!("writing {}", metrics_path.display())));
    }
    let outcome = outcome?;
    outcome
        .network
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "trained {} epochs: standard error {:.4}, certified error {:.4} at eps {}",
            last.epoch, last.std_err, last.cert_err, last.eps
        );
    }
    println!("model written to {}", args.out.display());
    println!("metrics written to {}", metrics_path.display());
    Ok(())
}
