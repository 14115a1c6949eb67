//! Labelled sample files and radius parsing.
//!
//! A dataset file is either a JSON array of `{"x": [...], "y": label}`
//! records or the same records one per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Sample {
    pub fn input(&self) -> Result<Tensor> {
        Tensor::vector(self.x.clone())
    }
}

pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    let trimmed = text.trim_start();
    let samples: Vec<Sample> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Malformed(format!("dataset line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?
    };
    if let Some(first) = samples.first() {
        let width = first.x.len();
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != width {
                return Err(Error::Malformed(format!(
                    "sample {i} has {} features, expected {width}",
                    s.x.len()
                )));
            }
            if let Some(k) = s.x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Malformed(format!("sample {i} feature {k} is not finite")));
            }
        }
    }
    Ok(samples)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    parse_samples(&fs::read_to_string(path)?)
}

/// Writes one JSON record per line.
pub fn save_samples(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Parses a radius written as a decimal (`0.1`) or a fraction (`8/255`).
pub fn parse_eps(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse radius {s:?}"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Config(format!("radius must be finite and >= 0, got {s:?}")));
    }
    Ok(v)
}
