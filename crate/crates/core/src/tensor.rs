//! Dense row-major tensors (vectors and matrices) over any [`Scalar`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Checked constructor: the shape must cover the data and every entry
    /// must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(dim_err("Tensor::new", format!("{n} entries"), data.len()));
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for values produced by arithmetic on already
    /// validated tensors.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![T::zero(); n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the entries; the shape cannot change.
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn values(&self) -> Vec<f64> {
        self.data.iter().map(Scalar::value).collect()
    }

    /// Drops any autodiff bookkeeping and keeps plain values.
    pub fn detach(&self) -> Tensor<f64> {
        Tensor::from_parts(self.shape.clone(), self.values())
    }

    pub fn map<U: Scalar>(&self, f: impl FnMut(T) -> U) -> Tensor<U> {
        Tensor::from_parts(self.shape.clone(), self.data.iter().copied().map(f).collect())
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err(op, format!("{:?}", self.shape), format!("{:?}", other.shape)));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.len() != other.len() {
            return Err(dim_err("dot", self.len(), other.len()));
        }
        Ok(T::dot(&self.data, &other.data))
    }

    /// W v for W of shape [m, n] and v of length n.
    pub fn matvec(&self, v: &Self) -> Result<Self> {
        if !self.is_matrix() || self.cols() != v.len() {
            return Err(dim_err(
                "matvec",
                format!("vector of length {}", self.cols()),
                format!("{:?}", v.shape),
            ));
        }
        let data = (0..self.rows()).map(|i| T::dot(self.row(i), &v.data)).collect();
        Ok(Self::from_parts(vec![self.rows()], data))
    }

    /// vᵀ W for v of length m and W of shape [m, n]; returns length n.
    pub fn vecmat(v: &Self, w: &Self) -> Result<Self> {
        if !w.is_matrix() || w.rows() != v.len() {
            return Err(dim_err(
                "vecmat",
                format!("vector of length {}", w.rows()),
                format!("{:?}", v.shape),
            ));
        }
        w.transpose().matvec(v)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if !self.is_matrix() || !other.is_matrix() || self.cols() != other.rows() {
            return Err(dim_err(
                "matmul",
                format!("[{}, _]", self.cols()),
                format!("{:?}", other.shape),
            ));
        }
        let (m, n) = (self.rows(), other.cols());
        let ot = other.transpose();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let r = self.row(i);
            for j in 0..n {
                data.push(T::dot(r, ot.row(j)));
            }
        }
        Ok(Self::from_parts(vec![m, n], data))
    }

    pub fn transpose(&self) -> Self {
        if !self.is_matrix() {
            return self.clone();
        }
        let (m, n) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(m * n);
        for j in 0..n {
            for i in 0..m {
                data.push(self.data[i * n + j]);
            }
        }
        Self::from_parts(vec![n, m], data)
    }

    /// W · diag(d): scales column j by d[j].
    pub fn scale_cols(&self, d: &Self) -> Result<Self> {
        if !self.is_matrix() || self.cols() != d.len() {
            return Err(dim_err("scale_cols", self.cols(), d.len()));
        }
        let c = self.cols();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, &x)| x * d.data[k % c])
            .collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    /// diag(d) · W: scales row i by d[i].
    pub fn scale_rows(&self, d: &Self) -> Result<Self> {
        if !self.is_matrix() || self.rows() != d.len() {
            return Err(dim_err("scale_rows", self.rows(), d.len()));
        }
        let c = self.cols();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, &x)| x * d.data[k / c])
            .collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn column(&self, j: usize) -> Self {
        let data = (0..self.rows()).map(|i| self.at(i, j)).collect();
        Self::from_parts(vec![self.rows()], data)
    }

    /// Per-row dual norm ‖W_i‖_* (ℓ1 rows for ℓ∞ balls, ℓ2 rows for ℓ2 balls).
    pub fn row_dual_norms(&self, norm: Norm) -> Self {
        let data = (0..self.rows()).map(|i| norm.dual(self.row(i))).collect();
        Self::from_parts(vec![self.rows()], data)
    }

    pub fn abs(&self) -> Self {
        self.map(Scalar::abs)
    }

    pub fn relu(&self) -> Self {
        self.map(Scalar::relu)
    }
}

impl Tensor<f64> {
    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(dim_err("from_rows", format!("rows of length {c}"), "ragged rows"));
        }
        Self::matrix(r, c, rows.concat())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Converts into another float precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(U::from_f64)
    }
}

/// Perturbation-ball norm. Only ℓ2 and ℓ∞ are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    /// Parses a norm order p (2 or ∞).
    pub fn from_order(p: f64) -> Result<Self> {
        if p == 2.0 {
            Ok(Norm::L2)
        } else if p == f64::INFINITY {
            Ok(Norm::Linf)
        } else {
            Err(Error::UnsupportedNorm(p.to_string()))
        }
    }

    /// The dual norm of `v`: ‖v‖₁ for ℓ∞ balls, ‖v‖₂ for ℓ2 balls.
    pub fn dual<T: Scalar>(self, v: &[T]) -> T {
        match self {
            Norm::Linf => v.iter().fold(T::zero(), |acc, &x| acc + x.abs()),
            Norm::L2 => {
                let sq = T::dot(v, v);
                if sq.value() > 0.0 {
                    sq.sqrt()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// The primal norm ‖v‖_p.
    pub fn primal(self, v: &[f64]) -> f64 {
        match self {
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "2" => Ok(Norm::L2),
            "linf" | "inf" | "l_inf" => Ok(Norm::Linf),
            other => Err(Error::UnsupportedNorm(other.to_string())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::L2 => f.write_str("l2"),
            Norm::Linf => f.write_str("linf"),
        }
    }
}

/// Dual norm of a vector for a numeric order p ∈ {2, ∞}.
pub fn dual_norm<T: Scalar>(v: &Tensor<T>, p: f64) -> Result<T> {
    Ok(Norm::from_order(p)?.dual(v.data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_matvec() {
        let w = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = Tensor::vector(vec![3.0, 4.0]).unwrap();
        assert_eq!(w.matvec(&v).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn toy_first_layer_matvec() {
        let w = t(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
        let v = Tensor::vector(vec![0.1, 0.42]).unwrap();
        assert_eq!(w.matvec(&v).unwrap().data(), &[0.1, -0.1, 0.42, -0.42]);
    }

    #[test]
    fn matvec_against_hand_products() {
        // Expected values were computed entry by entry in a separate Python session.
        let w = t(&[
            vec![0.5488135, 0.71518937, 0.60276338],
            vec![0.54488318, 0.4236548, 0.64589411],
            vec![0.43758721, 0.891773, 0.96366276],
        ]);
        let v = Tensor::vector(vec![0.38344152, 0.79172504, 0.52889492]).unwrap();
        let got = w.matvec(&v).unwrap();
        let want = [1.0954697048513744, 0.8859590618747468, 1.3835044573880584];
        for (g, w) in got.data().iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn matvec_shape_mismatch() {
        let w = Tensor::<f64>::zeros(&[2, 3]);
        let v = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(matches!(w.matvec(&v), Err(Error::Dimension { .. })));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![0.0; 3]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            Tensor::vector(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(Tensor::vector(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn dual_norm_examples() {
        let v = Tensor::vector(vec![-0.5, 1.0]).unwrap();
        assert_eq!(dual_norm(&v, f64::INFINITY).unwrap(), 1.5);
        let z = Tensor::vector(vec![0.0; 3]).unwrap();
        assert_eq!(dual_norm(&z, 2.0).unwrap(), 0.0);
        assert_eq!(dual_norm(&z, f64::INFINITY).unwrap(), 0.0);
        let v = Tensor::vector(vec![3.0, 4.0]).unwrap();
        assert_eq!(dual_norm(&v, 2.0).unwrap(), 5.0);
        assert!(matches!(dual_norm(&v, 1.0), Err(Error::UnsupportedNorm(_))));
    }

    #[test]
    fn matmul_transpose_and_scaling() {
        let a = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = t(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(a.transpose().data(), &[1.0, 3.0, 2.0, 4.0]);
        let d = Tensor::vector(vec![2.0, -1.0]).unwrap();
        assert_eq!(a.scale_cols(&d).unwrap().data(), &[2.0, -2.0, 6.0, -4.0]);
        assert_eq!(a.scale_rows(&d).unwrap().data(), &[2.0, 4.0, -3.0, -4.0]);
        let v = Tensor::vector(vec![1.0, 1.0]).unwrap();
        assert_eq!(Tensor::vecmat(&v, &a).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn f32_path_works() {
        let w = Tensor::<f32>::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let v = Tensor::<f32>::vector(vec![0.25, 0.5]).unwrap();
        assert_eq!(w.matvec(&v).unwrap().data(), &[0.75f32]);
        assert_eq!(w.row_dual_norms(Norm::L2).data()[0], 2f32.sqrt());
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("linf".parse::<Norm>().unwrap(), Norm::Linf);
        assert_eq!("L2".parse::<Norm>().unwrap(), Norm::L2);
        assert!("l1".parse::<Norm>().is_err());
        assert_eq!(Norm::from_order(f64::INFINITY).unwrap(), Norm::Linf);
    }
}
