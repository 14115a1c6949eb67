use super::Polygon;
use crate::bounds::{ibp_bounds, NeuronGroup, PerturbationSpec};
use crate::error::{dim_err, Error, Result};
use crate::model::Network;
use crate::tensor::{Norm, Tensor};

/// Largest number of unstable neurons the enumeration accepts (2^22 patterns).
pub const MAX_PATTERN_NEURONS: usize = 22;

/// Half-planes are accepted down to this signed distance.
const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExactMinimum {
    /// min over the box of c_tᵀ h_L(z).
    pub value: f64,
    /// A minimizer (a vertex of its activation region).
    pub point: Tensor,
    /// Neurons left undecided by interval bounds.
    pub unstable: usize,
    /// Non-empty activation regions visited.
    pub regions: usize,
}

/// Exact minimum of c_tᵀ h_L over an ℓ∞ box around a 2-dimensional input.
///
/// Neurons that interval bounds cannot fix are enumerated depth first in layer
/// order. Inside one activation pattern the network is affine in the input,
/// so each branch clips the current region by the sign half-plane of the
/// branching neuron, and the objective is minimized at the vertices of every
/// surviving region.
pub fn pattern_oracle(net: &Network, x: &Tensor, spec: &PerturbationSpec, c: &Tensor) -> Result<ExactMinimum> {
    if spec.norm != Norm::Linf {
        return Err(Error::UnsupportedNorm(format!("pattern oracle needs linf, got {}", spec.norm)));
    }
    if net.input_width() != 2 || x.len() != 2 {
        return Err(dim_err("pattern_oracle", "2-dimensional input", x.len()));
    }
    if c.len() != net.output_width() {
        return Err(dim_err("pattern_oracle", net.output_width(), c.len()));
    }
    let bounds = ibp_bounds(net, x, spec)?;
    let unstable = bounds.unstable_count();
    if unstable > MAX_PATTERN_NEURONS {
        return Err(Error::TooManyUnstable {
            count: unstable,
            limit: MAX_PATTERN_NEURONS,
        });
    }
    let groups: Vec<Vec<NeuronGroup>> = (0..net.depth() - 1).map(|i| bounds.groups(i)).collect();
    let e = spec.eps;
    let xs = x.data();
    let region = Polygon::rectangle([xs[0] - e, xs[1] - e], [xs[0] + e, xs[1] + e]);

    let mut search = Search {
        net,
        groups: &groups,
        c: c.data(),
        best: None,
        regions: 0,
    };
    search.layer(0, vec![[1.0, 0.0], [0.0, 1.0]], vec![0.0, 0.0], region);
    let (value, p) = search
        .best
        .ok_or_else(|| Error::Internal("no activation region is feasible".into()))?;
    Ok(ExactMinimum {
        value,
        point: Tensor::from_parts(vec![2], p.to_vec()),
        unstable,
        regions: search.regions,
    })
}

struct Search<'a> {
    net: &'a Network,
    groups: &'a [Vec<NeuronGroup>],
    c: &'a [f64],
    best: Option<(f64, [f64; 2])>,
    regions: usize,
}

impl Search<'_> {
    /// `a`, `a0`: the input of layer `i` as an affine function of the point.
    fn layer(&mut self, i: usize, a: Vec<[f64; 2]>, a0: Vec<f64>, region: Polygon) {
        let layer = &self.net.layers()[i];
        let w = &layer.weights;
        let (rows, cols) = (w.rows(), w.cols());
        let mut p = vec![[0.0; 2]; rows];
        let mut p0 = layer.bias.data().to_vec();
        for r in 0..rows {
            let wr = w.row(r);
            for k in 0..cols {
                p[r][0] += wr[k] * a[k][0];
                p[r][1] += wr[k] * a[k][1];
                p0[r] += wr[k] * a0[k];
            }
        }
        if i + 1 == self.net.depth() {
            let mut o = [0.0; 2];
            let mut o0 = 0.0;
            for (r, &cr) in self.c.iter().enumerate() {
                o[0] += cr * p[r][0];
                o[1] += cr * p[r][1];
                o0 += cr * p0[r];
            }
            self.regions += 1;
            if let Some(cand) = region.minimize(o, o0) {
                if self.best.is_none_or(|(v, _)| cand.0 < v) {
                    self.best = Some(cand);
                }
            }
            return;
        }
        let mut active = vec![false; rows];
        self.decide(i, &p, &p0, 0, &mut active, region);
    }

    fn decide(&mut self, i: usize, p: &[[f64; 2]], p0: &[f64], j: usize, active: &mut Vec<bool>, region: Polygon) {
        if j == p.len() {
            let a = (0..p.len()).map(|r| if active[r] { p[r] } else { [0.0; 2] }).collect();
            let a0 = (0..p.len()).map(|r| if active[r] { p0[r] } else { 0.0 }).collect();
            self.layer(i + 1, a, a0, region);
            return;
        }
        match self.groups[i][j] {
            NeuronGroup::Active => {
                active[j] = true;
                self.decide(i, p, p0, j + 1, active, region);
            }
            NeuronGroup::Inactive => {
                active[j] = false;
                self.decide(i, p, p0, j + 1, active, region);
            }
            NeuronGroup::Unstable => {
                let on = region.clip(p[j], p0[j], CLIP_TOL);
                if !on.is_empty() {
                    active[j] = true;
                    self.decide(i, p, p0, j + 1, active, on);
                }
                let off = region.clip([-p[j][0], -p[j][1]], -p0[j], CLIP_TOL);
                if !off.is_empty() {
                    active[j] = false;
                    self.decide(i, p, p0, j + 1, active, off);
                }
            }
        }
    }
}
