/// Convex polygon in the plane, stored as its vertex cycle.
///
/// Degenerate polygons (segments, single points) are kept, since optima often
/// sit exactly on a clipping line.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self {
            vertices: vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]],
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Intersection with {z : a·z + b ≥ 0}, accepting points down to −`tol`.
    pub fn clip(&self, a: [f64; 2], b: f64, tol: f64) -> Self {
        let n = self.vertices.len();
        let side = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] + b;
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..n {
            let p = self.vertices[k];
            let q = self.vertices[(k + 1) % n];
            let (sp, sq) = (side(&p), side(&q));
            let p_in = sp >= -tol;
            let q_in = sq >= -tol;
            if p_in {
                out.push(p);
            }
            if p_in != q_in && n > 1 {
                let t = sp / (sp - sq);
                if t.is_finite() {
                    out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
        }
        out.dedup();
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        Self { vertices: out }
    }

    /// Minimum of a·z + b over the vertices, with the minimizing vertex.
    pub fn minimize(&self, a: [f64; 2], b: f64) -> Option<(f64, [f64; 2])> {
        self.vertices
            .iter()
            .map(|p| (a[0] * p[0] + a[1] * p[1] + b, *p))
            .fold(None, |best, cand| match best {
                Some((v, _)) if v <= cand.0 => best,
                _ => Some(cand),
            })
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut s = 0.0;
        for k in 0..n {
            let p = self.vertices[k];
            let q = self.vertices[(k + 1) % n];
            s += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * s.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_a_square() {
        let sq = Polygon::rectangle([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(sq.area(), 1.0);
        // x ≥ 0.25
        let half = sq.clip([1.0, 0.0], -0.25, 0.0);
        assert!((half.area() - 0.75).abs() < 1e-15);
        // x + y ≤ 1, i.e. −x − y + 1 ≥ 0
        let tri = sq.clip([-1.0, -1.0], 1.0, 0.0);
        assert!((tri.area() - 0.5).abs() < 1e-15);
        assert!(sq.clip([1.0, 0.0], -2.0, 0.0).is_empty());
    }

    #[test]
    fn degenerate_clip_keeps_the_edge() {
        let sq = Polygon::rectangle([0.0, 0.0], [1.0, 1.0]);
        // x ≤ 0 leaves the left edge
        let edge = sq.clip([-1.0, 0.0], 0.0, 1e-12);
        assert!(!edge.is_empty());
        assert_eq!(edge.area(), 0.0);
        let (v, p) = edge.minimize([0.0, 1.0], 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(p, [0.0, 0.0]);
    }
}
