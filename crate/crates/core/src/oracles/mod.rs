//! Ground truth for the margin minimization: an exact solver for 2-input
//! networks, a grid search and a PGD attack.

mod grid;
mod pattern;
mod pgd;
mod polygon;

pub use grid::grid_oracle;
pub use pattern::{pattern_oracle, ExactMinimum, MAX_PATTERN_NEURONS};
pub use pgd::{pgd_attack, PgdConfig, PgdResult};
pub use polygon::Polygon;

use crate::error::{Error, Result};

/// Certified lower bound, optional exact minimum and best feasible value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub exact: Option<f64>,
    pub upper: f64,
}

impl Bracket {
    /// lower ≤ exact ≤ upper (or lower ≤ upper) up to `tol`.
    pub fn is_ordered(&self, tol: f64) -> bool {
        match self.exact {
            Some(e) => self.lower <= e + tol && e <= self.upper + tol,
            None => self.lower <= self.upper + tol,
        }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        if self.is_ordered(tol) {
            Ok(())
        } else {
            Err(Error::Internal(format!("bracket out of order: {self:?}")))
        }
    }
}
