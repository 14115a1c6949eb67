//! Fully-connected ReLU networks, margin objectives and the model file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autodiff::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MODEL_FORMAT: &str = "certbound-net-v1";

/// One affine layer `x = W z + b`, with `W` of shape [out, in].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T = f64> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if !weights.is_matrix() {
            return Err(dim_err("DenseLayer", "matrix weights", format!("{:?}", weights.shape())));
        }
        if bias.len() != weights.rows() || bias.shape().len() != 1 {
            return Err(dim_err("DenseLayer bias", weights.rows(), format!("{:?}", bias.shape())));
        }
        Ok(Self { weights, bias })
    }

    pub fn without_bias(weights: Tensor<T>) -> Result<Self> {
        let bias = Tensor::zeros(&[weights.rows()]);
        Self::new(weights, bias)
    }

    pub fn in_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.weights.matvec(z)?.add(&self.bias)
    }
}

/// Dense layers with ReLU between consecutive layers and none after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f64> {
    layers: Vec<DenseLayer<T>>,
}

/// Every pre-activation `x_i` and every layer input `z_i` of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f64> {
    /// z_1 (the input), z_2 = σ(x_1), …, z_L.
    pub inputs: Vec<Tensor<T>>,
    /// x_1, …, x_L; the last entry holds the logits.
    pub pre_activations: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn logits(&self) -> &Tensor<T> {
        self.pre_activations.last().expect("network has at least two layers")
    }

    /// (x_i, z_i) pairs for i = 1..L.
    pub fn pairs(&self) -> impl Iterator<Item = (&Tensor<T>, &Tensor<T>)> {
        self.pre_activations.iter().zip(&self.inputs)
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidLayer {
                layer: layers.len(),
                reason: "a network needs at least one hidden layer (two linear layers)".into(),
            });
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::InvalidLayer {
                    layer: i + 1,
                    reason: format!(
                        "input width {} does not match previous output width {}",
                        pair[1].in_width(),
                        pair[0].out_width()
                    ),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    /// Number of linear layers L.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    /// Output widths of every layer.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::out_width).collect()
    }

    pub fn forward(&self, z1: &Tensor<T>) -> Result<ForwardTrace<T>> {
        if z1.len() != self.input_width() {
            return Err(dim_err("forward", self.input_width(), z1.len()));
        }
        let mut inputs = Vec::with_capacity(self.depth());
        let mut pre = Vec::with_capacity(self.depth());
        let mut z = z1.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let x = layer.apply(&z)?;
            inputs.push(z);
            z = if i + 1 < self.depth() { x.relu() } else { Tensor::zeros(&[0]) };
            pre.push(x);
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations: pre,
        })
    }

    /// Logits h_L(x).
    pub fn evaluate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut z = x.clone();
        if z.len() != self.input_width() {
            return Err(dim_err("evaluate", self.input_width(), z.len()));
        }
        let last = self.depth() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let x = layer.apply(&z)?;
            z = if i < last { x.relu() } else { x };
        }
        Ok(z)
    }

    /// c_tᵀ h_L(x) for an arbitrary objective row `c`.
    pub fn objective_value(&self, x: &Tensor<T>, c: &Tensor<T>) -> Result<T> {
        self.evaluate(x)?.dot(c)
    }

    pub fn margin(&self, x: &Tensor<T>, spec: &MarginSpec) -> Result<T> {
        self.objective_value(x, &spec.objective_as())
    }

    pub fn map<U: Scalar>(&self, mut f: impl FnMut(T) -> U) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: l.weights.map(&mut f),
                    bias: l.bias.map(&mut f),
                })
                .collect(),
        }
    }

    /// Parameter tensors in the order W_1, b_1, W_2, b_2, ….
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    pub fn detach(&self) -> Network<f64> {
        self.map(|v| v.value())
    }

    /// Σ_{k=2..L} Π_{m=k..L} ‖W_m‖_{∞→∞}: how much a unit ℓ∞ deviation
    /// injected after each hidden layer can move the logits.
    pub fn deviation_gain(&self) -> f64 {
        let norms: Vec<f64> = self
            .layers
            .iter()
            .map(|l| {
                (0..l.out_width())
                    .map(|i| l.weights.row(i).iter().map(|w| w.value().abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut total = 0.0;
        let mut prod = 1.0;
        for n in norms.iter().skip(1).rev() {
            prod *= n;
            total += prod;
        }
        total
    }
}

impl Network<f64> {
    /// Replaces every parameter with a leaf variable on `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> Network<Var<'t>> {
        self.map(|v| tape.var(v))
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        self.map(U::from_f64)
    }

    /// Predicted class: `h ≥ 0` for single-output networks, otherwise the
    /// first maximal logit.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let logits = self.evaluate(x)?;
        if logits.len() == 1 {
            return Ok(usize::from(logits.data()[0] >= 0.0));
        }
        let mut best = 0;
        for (i, &v) in logits.data().iter().enumerate() {
            if v > logits.data()[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Calls `update(index, values)` on every parameter tensor, in the order
    /// of [`Network::parameters`].
    pub fn update_parameters(&mut self, mut update: impl FnMut(usize, &mut [f64])) {
        let mut k = 0;
        for layer in &mut self.layers {
            update(k, layer.weights.data_mut());
            update(k + 1, layer.bias.data_mut());
            k += 2;
        }
    }

    /// The maximal-margin classifier for the two-region toy problem:
    /// h(z) = W_2 σ(W_1 z), no biases.
    pub fn toy_max_margin() -> Self {
        let w1 = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .expect("static shape");
        let w2 = Tensor::from_rows(&[vec![-1.0, -1.0, 1.0, -1.0]]).expect("static shape");
        Network::new(vec![
            DenseLayer::without_bias(w1).expect("static shape"),
            DenseLayer::without_bias(w2).expect("static shape"),
        ])
        .expect("static shape")
    }

    pub fn to_json(&self) -> String {
        let file = NetFile {
            format: MODEL_FORMAT.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    in_width: l.in_width(),
                    out_width: l.out_width(),
                    weights: l.weights.data().iter().map(|v| Value::String(format!("{v:?}"))).collect(),
                    bias: Some(l.bias.data().iter().map(|v| Value::String(format!("{v:?}"))).collect()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("model file: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Malformed(format!(
                "unknown format {:?}, expected {MODEL_FORMAT:?}",
                file.format
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, lf) in file.layers.into_iter().enumerate() {
            let bad = |reason: String| Error::InvalidLayer { layer: i, reason };
            if lf.weights.len() != lf.in_width * lf.out_width {
                return Err(bad(format!(
                    "expected {}x{} = {} weights, found {}",
                    lf.out_width,
                    lf.in_width,
                    lf.in_width * lf.out_width,
                    lf.weights.len()
                )));
            }
            let weights = parse_values(&lf.weights).map_err(&bad)?;
            let bias = match lf.bias {
                Some(b) => {
                    if b.len() != lf.out_width {
                        return Err(bad(format!("expected {} biases, found {}", lf.out_width, b.len())));
                    }
                    parse_values(&b).map_err(&bad)?
                }
                None => vec![0.0; lf.out_width],
            };
            let layer = DenseLayer::new(
                Tensor::matrix(lf.out_width, lf.in_width, weights).map_err(|e| bad(e.to_string()))?,
                Tensor::vector(bias).map_err(|e| bad(e.to_string()))?,
            )
            .map_err(|e| bad(e.to_string()))?;
            layers.push(layer);
        }
        Network::new(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "in")]
    in_width: usize,
    #[serde(rename = "out")]
    out_width: usize,
    weights: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<Value>>,
}

/// Accepts JSON numbers, decimal strings and hex-float strings ("0x1.8p-3").
fn parse_values(values: &[Value]) -> std::result::Result<Vec<f64>, String> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let x = match v {
                Value::Number(n) => n.as_f64().ok_or_else(|| format!("entry {k}: {n} is not a float"))?,
                Value::String(s) => parse_float(s).ok_or_else(|| format!("entry {k}: cannot parse {s:?}"))?,
                other => return Err(format!("entry {k}: expected number or string, found {other}")),
            };
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("entry {k} is not finite"))
            }
        })
        .collect()
}

pub(crate) fn parse_float(s: &str) -> Option<f64> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let is_hex = lower.starts_with("0x") || lower.starts_with("-0x") || lower.starts_with("+0x");
    if is_hex {
        hexf_parse::parse_hexf64(t.trim_start_matches('+'), false).ok()
    } else {
        t.parse::<f64>().ok()
    }
}

/// Margin objective c_t = e_y − e_t, or the ±1 scalar objective of a
/// single-output binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSpec {
    pub label: usize,
    pub target: usize,
    objective: Tensor<f64>,
}

impl MarginSpec {
    pub fn new(label: usize, target: usize, classes: usize) -> Result<Self> {
        if label >= classes || target >= classes {
            return Err(Error::Contract(format!(
                "label {label} / target {target} out of range for {classes} classes"
            )));
        }
        let mut c = vec![0.0; classes];
        c[label] += 1.0;
        c[target] -= 1.0;
        Ok(Self {
            label,
            target,
            objective: Tensor::from_parts(vec![classes], c),
        })
    }

    /// Single logit h: class 1 wants h > 0 (c = [1]), class 0 wants h < 0 (c = [−1]).
    pub fn binary(label: usize) -> Result<Self> {
        let c = match label {
            0 => -1.0,
            1 => 1.0,
            _ => return Err(Error::Contract(format!("binary label must be 0 or 1, got {label}"))),
        };
        Ok(Self {
            label,
            target: 1 - label,
            objective: Tensor::from_parts(vec![1], vec![c]),
        })
    }

    /// Every non-true target for a network with `outputs` logits.
    pub fn all_targets(label: usize, outputs: usize) -> Result<Vec<Self>> {
        if outputs == 1 {
            return Ok(vec![Self::binary(label)?]);
        }
        (0..outputs)
            .filter(|&t| t != label)
            .map(|t| Self::new(label, t, outputs))
            .collect()
    }

    pub fn objective(&self) -> &Tensor<f64> {
        &self.objective
    }

    pub fn objective_as<T: Scalar>(&self) -> Tensor<T> {
        self.objective.cast()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn toy_forward_at_optimal_corner() {
        let net = Network::toy_max_margin();
        let tr = net.forward(&v(&[0.3, 0.22])).unwrap();
        let close = |a: &Tensor, b: &[f64]| a.max_abs_diff(&v(b)) < 1e-15;
        assert!(close(&tr.pre_activations[0], &[0.3, -0.3, 0.22, -0.22]));
        assert!(close(&tr.inputs[1], &[0.3, 0.0, 0.22, 0.0]));
        assert!((tr.logits().data()[0] + 0.08).abs() < 1e-15);
        assert_eq!(tr.pairs().count(), 2);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let l1 = DenseLayer::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3])).unwrap();
        let l2 = DenseLayer::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        let net = Network::new(vec![l1, l2]).unwrap();
        let tr = net.forward(&v(&[0.7, -3.0])).unwrap();
        for x in &tr.pre_activations {
            assert!(x.data().iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn random_net_forward_matches_hand_evaluation() {
        // Layer-by-layer values computed independently in Python.
        let w1 = Tensor::from_rows(&[vec![0.2, -0.5], vec![0.9, 0.1], vec![-0.4, 0.3]]).unwrap();
        let b1 = v(&[0.05, -0.2, 0.1]);
        let w2 = Tensor::from_rows(&[vec![1.0, -0.6, 0.25], vec![-0.3, 0.8, 0.5]]).unwrap();
        let b2 = v(&[0.0, 0.1]);
        let net = Network::new(vec![DenseLayer::new(w1, b1).unwrap(), DenseLayer::new(w2, b2).unwrap()]).unwrap();
        let tr = net.forward(&v(&[0.3, -0.7])).unwrap();
        let want_x1 = [0.46, 0.0, -0.23];
        let want_x2 = [0.46, -0.038];
        assert!(tr.pre_activations[0].max_abs_diff(&v(&want_x1)) < 1e-12);
        assert!(tr.pre_activations[1].max_abs_diff(&v(&want_x2)) < 1e-12);
    }

    #[test]
    fn toy_clean_margin() {
        let net = Network::toy_max_margin();
        let spec = MarginSpec::binary(1).unwrap();
        let m = net.margin(&v(&[0.1, 0.42]), &spec).unwrap();
        assert!((m - 0.32).abs() < 1e-15);
        let spec0 = MarginSpec::binary(0).unwrap();
        assert!((net.margin(&v(&[0.1, 0.42]), &spec0).unwrap() + 0.32).abs() < 1e-15);
    }

    #[test]
    fn same_label_and_target_gives_zero_margin() {
        let s = MarginSpec::new(2, 2, 3).unwrap();
        assert!(s.objective().data().iter().all(|&c| c == 0.0));
        let s = MarginSpec::new(0, 2, 3).unwrap();
        assert_eq!(s.objective().data(), &[1.0, 0.0, -1.0]);
        assert_eq!(MarginSpec::all_targets(1, 3).unwrap().len(), 2);
    }

    #[test]
    fn rejects_broken_chains_and_shallow_nets() {
        let l1 = DenseLayer::without_bias(Tensor::<f64>::zeros(&[3, 2])).unwrap();
        let l2 = DenseLayer::without_bias(Tensor::<f64>::zeros(&[1, 4])).unwrap();
        assert!(matches!(
            Network::new(vec![l1.clone(), l2]),
            Err(Error::InvalidLayer { layer: 1, .. })
        ));
        assert!(Network::new(vec![l1]).is_err());
    }

    #[test]
    fn json_round_trip_and_optional_bias() {
        let net = Network::toy_max_margin();
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let text = r#"{"format":"certbound-net-v1","layers":[
            {"in":2,"out":1,"weights":["0x1.8p-1", 0.5]},
            {"in":1,"out":1,"weights":["-2"],"bias":["1e-3"]}]}"#;
        let n = Network::from_json(text).unwrap();
        assert_eq!(n.layers()[0].weights.data(), &[0.75, 0.5]);
        assert_eq!(n.layers()[0].bias.data(), &[0.0]);
        assert_eq!(n.layers()[1].bias.data(), &[1e-3]);
    }

    #[test]
    fn load_errors_name_the_layer() {
        let bad_count = r#"{"format":"certbound-net-v1","layers":[
            {"in":2,"out":1,"weights":[1,2]},
            {"in":1,"out":1,"weights":[1,2]}]}"#;
        assert!(matches!(Network::from_json(bad_count), Err(Error::InvalidLayer { layer: 1, .. })));
        let non_finite = r#"{"format":"certbound-net-v1","layers":[
            {"in":1,"out":1,"weights":["inf"]},
            {"in":1,"out":1,"weights":[1]}]}"#;
        assert!(matches!(Network::from_json(non_finite), Err(Error::InvalidLayer { layer: 0, .. })));
        let chain = r#"{"format":"certbound-net-v1","layers":[
            {"in":1,"out":2,"weights":[1,1]},
            {"in":3,"out":1,"weights":[1,1,1]}]}"#;
        assert!(matches!(Network::from_json(chain), Err(Error::InvalidLayer { layer: 1, .. })));
        assert!(matches!(Network::from_json(r#"{"format":"other","layers":[]}"#), Err(Error::Malformed(_))));
        assert!(matches!(Network::from_json("{"), Err(Error::Malformed(_))));
    }

    #[test]
    fn predict_binary_and_multiclass() {
        let net = Network::toy_max_margin();
        assert_eq!(net.predict(&v(&[0.1, 0.42])).unwrap(), 1);
        assert_eq!(net.predict(&v(&[0.0, -0.5])).unwrap(), 0);
    }

    #[test]
    fn deviation_gain_for_toy() {
        // Only W_2 follows a hidden layer; its ∞→∞ norm is 4.
        assert_eq!(Network::toy_max_margin().deviation_gain(), 4.0);
    }
}
