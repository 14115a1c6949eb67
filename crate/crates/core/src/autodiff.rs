//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! A [`Var`] is a scalar that remembers where it lives on a [`Tape`]. It
//! implements [`Scalar`], so any engine generic over `Scalar` can be run on
//! `Var`s and differentiated afterwards. Constants carry no tape and cost no
//! nodes. Dot products and sums are recorded as single fused nodes.
//!
//! ```
//! use certbound::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x;
//! let grads = tape.gradient(y);
//! assert_eq!(grads.wrt(x), 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Default)]
struct Graph {
    // Node i owns edges[offsets[i]..offsets[i + 1]].
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Graph {
    fn push(&mut self, edges: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        for (p, w) in edges {
            self.parents.push(p);
            self.partials.push(w);
        }
        let idx = self.offsets.len() - 1;
        self.offsets.push(self.parents.len() as u32);
        idx as u32
    }

    fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }
}

/// Single-threaded operation recorder. One tape per worker.
#[derive(Default)]
pub struct Tape {
    graph: RefCell<Graph>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.graph.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New leaf variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.graph.borrow_mut().push(std::iter::empty());
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    /// Leaf tensor with one node per entry.
    pub fn leaf_tensor(&self, t: &Tensor<f64>) -> Tensor<Var<'_>> {
        t.map(|v| self.var(v))
    }

    fn record(&self, value: f64, edges: impl IntoIterator<Item = (u32, f64)>) -> Var<'_> {
        let index = self.graph.borrow_mut().push(edges);
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    /// Reverse sweep from `output`, seeded with d(output)/d(output) = 1.
    pub fn gradient(&self, output: Var<'_>) -> Gradients {
        let g = self.graph.borrow();
        let mut adjoint = vec![0.0; g.len()];
        if let Some(t) = output.tape {
            assert!(std::ptr::eq(t, self), "variable belongs to a different tape");
            adjoint[output.index as usize] = 1.0;
            for i in (0..=output.index as usize).rev() {
                let a = adjoint[i];
                if a == 0.0 {
                    continue;
                }
                let (s, e) = (g.offsets[i] as usize, g.offsets[i + 1] as usize);
                for k in s..e {
                    adjoint[g.parents[k] as usize] += g.partials[k] * a;
                }
            }
        }
        Gradients { adjoint }
    }

    /// ∂loss/∂leaf for each leaf tensor. `loss` must hold exactly one entry.
    pub fn grad(&self, loss: &Tensor<Var<'_>>, leaves: &[&Tensor<Var<'_>>]) -> Result<Vec<Tensor<f64>>> {
        if loss.len() != 1 {
            return Err(Error::Contract(format!(
                "gradient requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let grads = self.gradient(loss.data()[0]);
        Ok(leaves.iter().map(|leaf| grads.tensor(leaf)).collect())
    }
}

/// Adjoints produced by one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adjoint.get(v.index as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn tensor(&self, t: &Tensor<Var<'_>>) -> Tensor<f64> {
        t.map(|v| self.wrt(v))
    }
}

/// Scalar recorded on a tape, or a tape-free constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({} @{})", self.value, self.index),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: 0,
            value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    fn edge(&self, w: f64) -> Option<(u32, f64)> {
        self.tape.map(|_| (self.index, w))
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        match self.tape {
            Some(t) => t.record(value, self.edge(partial)),
            None => Var::constant(value),
        }
    }

    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        match self.tape.or(other.tape) {
            Some(t) => {
                if let (Some(a), Some(b)) = (self.tape, other.tape) {
                    debug_assert!(std::ptr::eq(a, b), "mixing variables from two tapes");
                }
                t.record(value, self.edge(da).into_iter().chain(other.edge(db)))
            }
            None => Var::constant(value),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Zero for Var<'t> {
    fn zero() -> Self {
        Var::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.value == 0.0
    }
}

impl<'t> One for Var<'t> {
    fn one() -> Self {
        Var::constant(1.0)
    }
}

impl<'t> Scalar for Var<'t> {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn abs(self) -> Self {
        let s = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.value.abs(), s)
    }

    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.unary(r, 0.5 / r)
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    fn scale(self, k: f64) -> Self {
        self.unary(self.value * k, k)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let value = a.iter().zip(b).map(|(x, y)| x.value * y.value).sum();
        let tape = a.iter().chain(b).find_map(|v| v.tape);
        match tape {
            Some(t) => {
                let edges = a.iter().zip(b).flat_map(|(x, y)| {
                    x.edge(y.value).into_iter().chain(y.edge(x.value))
                });
                t.record(value, edges)
            }
            None => Var::constant(value),
        }
    }

    fn sum(xs: &[Self]) -> Self {
        let value = xs.iter().map(|x| x.value).sum();
        match xs.iter().find_map(|v| v.tape) {
            Some(t) => t.record(value, xs.iter().filter_map(|x| x.edge(1.0))),
            None => Var::constant(value),
        }
    }
}
