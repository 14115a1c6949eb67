use rayon::prelude::*;

use crate::bounds::PerturbationSpec;
use crate::error::{dim_err, Error, Result};
use crate::model::Network;
use crate::tensor::{Norm, Tensor};

/// Coordinate `k` of an `n`-point grid on [lo, hi] with exact endpoints.
fn grid_point(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if n == 1 {
        0.5 * (lo + hi)
    } else if k + 1 == n {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Smallest c_tᵀ h_L over a `resolution`-per-axis grid of the ball, with
/// its grid point. Points outside an ℓ2 ball are skipped.
///
/// Every grid point is feasible, so the result is an upper bound on the
/// exact minimum. Inputs of width 1 or 2 are supported.
pub fn grid_oracle(
    net: &Network,
    x: &Tensor,
    spec: &PerturbationSpec,
    c: &Tensor,
    resolution: usize,
) -> Result<(f64, Tensor)> {
    let dim = x.len();
    if !(1..=2).contains(&dim) || net.input_width() != dim {
        return Err(dim_err("grid_oracle", "input width 1 or 2", dim));
    }
    if resolution == 0 {
        return Err(Error::Contract("grid resolution must be at least 1".into()));
    }
    let e = spec.eps;
    let ny = if dim == 2 { resolution } else { 1 };
    let eval = |offset: &[f64]| -> Option<Result<(f64, Vec<f64>)>> {
        if spec.norm == Norm::L2 && Norm::L2.primal(offset) > e {
            return None;
        }
        let point: Vec<f64> = x.data().iter().zip(offset).map(|(a, b)| a + b).collect();
        let z = Tensor::from_parts(vec![dim], point);
        Some(net.objective_value(&z, c).map(|v| (v, z.into_data())))
    };
    let rows: Vec<Option<(f64, Vec<f64>)>> = (0..resolution)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, Vec<f64>)>> {
            let dx = grid_point(-e, e, i, resolution);
            let mut best: Option<(f64, Vec<f64>)> = None;
            for k in 0..ny {
                let offset = if dim == 2 { vec![dx, grid_point(-e, e, k, ny)] } else { vec![dx] };
                if let Some(r) = eval(&offset) {
                    let cand = r?;
                    if best.as_ref().is_none_or(|b| cand.0 < b.0) {
                        best = Some(cand);
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in rows.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.0 < b.0) {
            best = Some(cand);
        }
    }
    let (v, p) = match best {
        Some(b) => b,
        // Coarse grids can miss a small ℓ2 ball entirely; the center is feasible.
        None => (net.objective_value(x, c)?, x.data().to_vec()),
    };
    Ok((v, Tensor::from_parts(vec![dim], p)))
}
