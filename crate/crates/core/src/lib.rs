//! Robustness certification for fully connected ReLU classifiers.
//!
//! The crate computes margin lower bounds with interval bounds, Fast-Lin and
//! CROWN, measures how tight a relaxation is at its own optimum, brackets the
//! true minimum with exact and sampling oracles, and trains networks on a
//! robust objective that rewards tight relaxations.
//!
//! All numerical code is generic over [`Scalar`]. Plain `f64` (or `f32`)
//! certifies; [`autodiff::Var`] records a tape for training.
//!
//! ```
//! use certbound::bounds::{fastlin_certify, PerturbationSpec};
//! use certbound::{Network64, Tensor64};
//!
//! let net = Network64::toy_max_margin();
//! let x = Tensor64::vector(vec![0.1, 0.42]).unwrap();
//! let c = Tensor64::vector(vec![1.0]).unwrap();
//! let spec = PerturbationSpec::linf(0.2).unwrap();
//! let cert = fastlin_certify(&net, &x, &spec, &[c]).unwrap();
//! assert!((cert.margins[0] + 0.08).abs() < 1e-12);
//! ```

pub mod autodiff;
pub mod bounds;
pub mod data;
pub mod error;
pub mod model;
pub mod oracles;
pub mod scalar;
pub mod tensor;
pub mod tightness;
pub mod training;

pub use bounds::{Engine, PerturbationSpec};
pub use error::{Error, Result};
pub use model::{DenseLayer, MarginSpec, Network};
pub use scalar::Scalar;
pub use tensor::{Norm, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
