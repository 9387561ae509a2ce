//! Network description shared by the bounds, diagnostics, and training code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::special::erf;

/// Elementwise activation applied after the bias of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ActivationKind {
    /// `σ(x) = ((1+α)x + (1−α) x erf(μ(1−α)x)) / 2`.
    SmoothLeakyRelu { alpha: f64, mu: f64 },
    Identity {},
    /// Opaque activation described only by the two suprema entering `‖K_σ‖`.
    /// `inverse_jacobian_sup` is the already-aggregated `‖det(Jσ⁻¹)‖_∞`.
    Custom {
        name: String,
        derivative_sup: f64,
        inverse_jacobian_sup: f64,
    },
}

impl ActivationKind {
    pub fn smooth_leaky_relu(alpha: f64, mu: f64) -> Self {
        ActivationKind::SmoothLeakyRelu { alpha, mu }
    }

    pub fn identity() -> Self {
        ActivationKind::Identity {}
    }

    pub fn name(&self) -> &str {
        match self {
            ActivationKind::SmoothLeakyRelu { .. } => "smooth_leaky_relu",
            ActivationKind::Identity {} => "identity",
            ActivationKind::Custom { name, .. } => name,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        match self {
            ActivationKind::SmoothLeakyRelu { alpha, mu } => {
                let mut v = Vec::new();
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    v.push(format!("smooth_leaky_relu alpha {alpha} must lie in (0, 1)"));
                }
                if !(*mu > 0.0 && mu.is_finite()) {
                    v.push(format!("smooth_leaky_relu mu {mu} must be positive"));
                }
                v
            }
            ActivationKind::Identity {} => Vec::new(),
            ActivationKind::Custom {
                name,
                derivative_sup,
                inverse_jacobian_sup,
            } => {
                let mut v = Vec::new();
                for (label, x) in [
                    ("derivative_sup", derivative_sup),
                    ("inverse_jacobian_sup", inverse_jacobian_sup),
                ] {
                    if !(*x > 0.0 && x.is_finite()) {
                        v.push(format!("custom activation {name}: {label} {x} must be positive and finite"));
                    }
                }
                v
            }
        }
    }

    /// Value and derivative at `x`. Custom activations have no pointwise form.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        match self {
            ActivationKind::SmoothLeakyRelu { alpha, mu } => Ok((
                smooth_leaky_relu(x, *alpha, *mu),
                smooth_leaky_relu_derivative(x, *alpha, *mu),
            )),
            ActivationKind::Identity {} => Ok((x, 1.0)),
            ActivationKind::Custom { name, .. } => Err(Error::InvalidInput(format!(
                "custom activation {name} cannot be evaluated pointwise"
            ))),
        }
    }
}

pub fn smooth_leaky_relu(x: f64, alpha: f64, mu: f64) -> f64 {
    ((1.0 + alpha) * x + (1.0 - alpha) * x * erf(mu * (1.0 - alpha) * x)) / 2.0
}

pub fn smooth_leaky_relu_derivative(x: f64, alpha: f64, mu: f64) -> f64 {
    let k = mu * (1.0 - alpha);
    let z = k * x;
    let derf = 2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp();
    ((1.0 + alpha) + (1.0 - alpha) * erf(z) + (1.0 - alpha) * x * k * derf) / 2.0
}

/// Final nonlinear transformation `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Head {
    /// `g(x) = exp(−c‖x‖²)`.
    Gaussian { c: f64 },
    /// Softmax over the output coordinates; its RKHS norm must be supplied by the caller.
    Softmax {},
    /// Head known only through its RKHS norm.
    Custom { h_norm: f64 },
}

impl Head {
    pub fn gaussian(c: f64) -> Self {
        Head::Gaussian { c }
    }

    fn violations(&self) -> Vec<String> {
        match self {
            Head::Gaussian { c } if !(*c > 0.0 && c.is_finite()) => {
                vec![format!("gaussian head c {c} must be positive")]
            }
            Head::Custom { h_norm } if !(*h_norm > 0.0 && h_norm.is_finite()) => {
                vec![format!("custom head norm {h_norm} must be positive")]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// `d_j × d_{j-1}`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
    /// Smoothness exponent `s_j` of the Sobolev space on this layer's output.
    pub s_out: f64,
}

impl LayerSpec {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: ActivationKind, s_out: f64) -> Self {
        Self {
            weight,
            bias,
            activation,
            s_out,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Default smoothness `(d + 0.1) / 2`, just above the RKHS threshold `d/2`.
pub fn default_smoothness(d: usize) -> f64 {
    (d as f64 + 0.1) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// `s_0`.
    pub s_in: f64,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
}

impl NetworkSpec {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, LayerSpec::out_dim)
    }

    /// Widths `d_0, …, d_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(LayerSpec::out_dim))
            .collect()
    }

    /// Smoothness exponents `s_0, …, s_L`.
    pub fn smoothness(&self) -> Vec<f64> {
        std::iter::once(self.s_in)
            .chain(self.layers.iter().map(|l| l.s_out))
            .collect()
    }

    /// `s_{j-1}` for layer `j` (0-based index into `layers`).
    pub fn s_prev(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.s_in
        } else {
            self.layers[layer - 1].s_out
        }
    }

    pub fn weights(&self) -> Vec<&Matrix> {
        self.layers.iter().map(|l| &l.weight).collect()
    }

    /// Every structural violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.layers.is_empty() {
            v.push("network has no layers".to_string());
        }
        if self.input_dim == 0 {
            v.push("input dimension must be positive".to_string());
        }
        let d0 = self.input_dim as f64;
        if !(self.s_in > d0 / 2.0) || !self.s_in.is_finite() {
            v.push(format!("s_in {} must exceed d_0/2 = {}", self.s_in, d0 / 2.0));
        }
        let mut prev_dim = self.input_dim;
        let mut prev_s = self.s_in;
        for (j, layer) in self.layers.iter().enumerate() {
            let idx = j + 1;
            if layer.in_dim() != prev_dim {
                v.push(format!(
                    "layer {idx}: weight has {} columns but the previous width is {prev_dim}",
                    layer.in_dim()
                ));
            }
            if layer.bias.len() != layer.out_dim() {
                v.push(format!(
                    "layer {idx}: bias length {} does not match {} rows",
                    layer.bias.len(),
                    layer.out_dim()
                ));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                v.push(format!("layer {idx}: non-finite parameters"));
            }
            let half = layer.out_dim() as f64 / 2.0;
            if !(layer.s_out > half) || !layer.s_out.is_finite() {
                v.push(format!("layer {idx}: s {} must exceed d_{idx}/2 = {half}", layer.s_out));
            }
            if layer.s_out < prev_s {
                v.push(format!(
                    "layer {idx}: s {} is smaller than the previous exponent {prev_s}",
                    layer.s_out
                ));
            }
            for msg in layer.activation.violations() {
                v.push(format!("layer {idx}: {msg}"));
            }
            prev_dim = layer.out_dim();
            prev_s = layer.s_out;
        }
        v.extend(self.head.violations());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: usize, cols: usize, s: f64) -> LayerSpec {
        LayerSpec::new(
            Matrix::zeros(rows, cols),
            vec![0.0; rows],
            ActivationKind::identity(),
            s,
        )
    }

    #[test]
    fn valid_synthetic_shape() {
        let net = NetworkSpec {
            input_dim: 3,
            s_in: default_smoothness(3),
            layers: vec![layer(3, 3, default_smoothness(3)), layer(6, 3, default_smoothness(6))],
            head: Head::gaussian(1.0),
        };
        net.validate().unwrap();
        assert_eq!(net.widths(), vec![3, 3, 6]);
        assert_eq!(net.s_prev(1), 1.55);
    }

    #[test]
    fn reports_every_violation() {
        let net = NetworkSpec {
            input_dim: 2,
            s_in: 0.9,
            layers: vec![layer(4, 3, 1.0)],
            head: Head::gaussian(-1.0),
        };
        match net.validate() {
            Err(Error::Validation(v)) => {
                assert!(v.len() >= 4, "{v:?}");
                assert!(v.iter().any(|m| m.contains("s_in")));
                assert!(v.iter().any(|m| m.contains("columns")));
                assert!(v.iter().any(|m| m.contains("d_1/2")));
                assert!(v.iter().any(|m| m.contains("gaussian")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn decreasing_smoothness_is_rejected() {
        let net = NetworkSpec {
            input_dim: 6,
            s_in: default_smoothness(6),
            layers: vec![layer(3, 6, default_smoothness(3))],
            head: Head::gaussian(1.0),
        };
        assert!(net.validate().is_err());
    }

    #[test]
    fn activation_round_trips_json() {
        let a = ActivationKind::smooth_leaky_relu(0.5, 0.5);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"kind":"smooth_leaky_relu","params":{"alpha":0.5,"mu":0.5}}"#);
        assert_eq!(serde_json::from_str::<ActivationKind>(&s).unwrap(), a);
        let id: ActivationKind =
            serde_json::from_str(r#"{"kind":"identity","params":{}}"#).unwrap();
        assert_eq!(id, ActivationKind::identity());
    }
}
