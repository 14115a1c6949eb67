use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};

/// Two regions of the square [−1, 1]² separated by a band of half-width b
/// around the graph of |x₁|:
///
/// S0 = {x₂ ≤ |x₁| − b}, labelled 0, and S1 = {x₂ ≥ |x₁| + b}, labelled 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDatasetSpec {
    pub b: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::Config(format!("toy margin b must lie in (0, 1), got {}", self.b)));
        }
        Ok(())
    }

    /// Probability that a uniform sample of S0 ∪ S1 is labelled 1.
    ///
    /// S1 is a triangle of area (1 − b)² and S0 has area 3 − 2b.
    pub fn class_one_fraction(&self) -> f64 {
        let s1 = (1.0 - self.b).powi(2);
        s1 / (s1 + 3.0 - 2.0 * self.b)
    }
}

pub fn in_s0(x: &[f64], b: f64) -> bool {
    in_square(x) && x[1] <= x[0].abs() - b
}

pub fn in_s1(x: &[f64], b: f64) -> bool {
    in_square(x) && x[1] >= x[0].abs() + b
}

fn in_square(x: &[f64]) -> bool {
    x.len() == 2 && x.iter().all(|v| v.abs() <= 1.0)
}

/// `spec.n` uniform samples of S0 ∪ S1 by rejection from the square.
pub fn make_toy_dataset(spec: &ToyDatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n);
    while out.len() < spec.n {
        let x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        if in_s1(&x, spec.b) {
            out.push(Sample { x: x.to_vec(), y: 1 });
        } else if in_s0(&x, spec.b) {
            out.push(Sample { x: x.to_vec(), y: 0 });
        }
    }
    Ok(out)
}

/// `n` uniform samples of S1 alone.
pub fn sample_s1(b: f64, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    ToyDatasetSpec { b, n, seed }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = [rng.random_range(-1.0..=1.0), rng.random_range(b - 1.0..=1.0)];
        if in_s1(&x, b) {
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_membership() {
        assert!(in_s1(&[0.1, 0.42], 0.3));
        assert!(in_s0(&[0.0, -0.4], 0.3));
        assert!(!in_s0(&[0.0, 0.0], 0.3) && !in_s1(&[0.0, 0.0], 0.3));
    }

    #[test]
    fn samples_lie_in_their_region() {
        let spec = ToyDatasetSpec { b: 0.3, n: 500, seed: 7 };
        for s in make_toy_dataset(&spec).unwrap() {
            match s.y {
                1 => assert!(in_s1(&s.x, 0.3)),
                _ => assert!(in_s0(&s.x, 0.3)),
            }
        }
        for x in sample_s1(0.3, 200, 1).unwrap() {
            assert!(in_s1(&x, 0.3));
        }
    }

    #[test]
    fn rejects_bad_margin() {
        assert!(make_toy_dataset(&ToyDatasetSpec { b: 1.0, n: 1, seed: 0 }).is_err());
        assert!(make_toy_dataset(&ToyDatasetSpec { b: 0.0, n: 1, seed: 0 }).is_err());
    }

    #[test]
    fn class_balance_matches_area_ratio() {
        let spec = ToyDatasetSpec { b: 0.3, n: 10_000, seed: 11 };
        let p = spec.class_one_fraction();
        let ones = make_toy_dataset(&spec).unwrap().iter().filter(|s| s.y == 1).count() as f64;
        let sigma = (spec.n as f64 * p * (1.0 - p)).sqrt();
        assert!((ones - spec.n as f64 * p).abs() <= 3.0 * sigma, "{ones} vs {}", spec.n as f64 * p);
    }
}
