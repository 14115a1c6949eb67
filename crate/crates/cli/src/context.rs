//! Shared plumbing: input loading, seeds, thread pools, exit codes and output sinks.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use certbound::data::{load_samples, Sample};
use certbound::{Error, Network};

pub const SEED_VAR: &str = "CERTBOUND_SEED";

/// A check on computed results that failed; maps to exit code 3.
#[derive(Debug)]
pub struct InvariantViolation(pub String);

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

/// 2 for unreadable or inconsistent input, 3 for violated invariants.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InvariantViolation>() {
            return 3;
        }
        if let Some(Error::Internal(_) | Error::Diverged { .. }) = cause.downcast_ref::<Error>() {
            return 3;
        }
    }
    2
}

/// Seed precedence: explicit flag, then `CERTBOUND_SEED`, then `fallback`.
pub fn seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    env_seed().map(|s| s.unwrap_or(fallback))
}

pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_VAR}={v:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_VAR),
    }
}

pub fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        anyhow::ensure!(n > 0, "--jobs must be at least 1");
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

/// Loads a model and a dataset and checks that they fit together.
pub fn load_inputs(model: &Path, data: &Path) -> Result<(Network, Vec<Sample>)> {
    let net = Network::load(model).with_context(|| format!("reading model {}", model.display()))?;
    let samples = load_samples(data).with_context(|| format!("reading dataset {}", data.display()))?;
    let classes = net.output_width().max(2);
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != net.input_width() {
            anyhow::bail!(
                "sample {i} has {} features, the model expects {}",
                s.x.len(),
                net.input_width()
            );
        }
        if s.y >= classes {
            anyhow::bail!("sample {i} has label {}, the model has {classes} classes", s.y);
        }
    }
    Ok((net, samples))
}

pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Prints a summary line next to the CSV: to stdout when the CSV goes to a
/// file, to stderr when it shares stdout.
pub fn summary(csv_to_file: bool, line: &str) {
    if csv_to_file {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}
