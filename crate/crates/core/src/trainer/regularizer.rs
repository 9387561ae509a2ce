//! Bound-derived penalties and their gradients with respect to the weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{rank_tolerance, svd_thin, Matrix};
use crate::network::NetworkSpec;

/// Weight of the spectral-norm product inside the synthetic regularizer.
pub const SYNTHETIC_NORM_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    None,
    /// `λ (Π_j det(W_jᵀW_j)^{−1/2} + 10 Π_j ‖W_j‖)` over every layer.
    Synthetic { lambda: f64 },
    /// `Σ_{j ∈ layers} λ1 ‖W_j‖ + λ2 / det(I + W_jᵀW_j)`; layers are 1-based.
    Perlayer {
        lambda1: f64,
        lambda2: f64,
        layers: Vec<usize>,
    },
}

impl Regularizer {
    pub fn violations(&self, depth: usize) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            Regularizer::None => {}
            Regularizer::Synthetic { lambda } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    v.push(format!("synthetic regularizer lambda {lambda} must be non-negative"));
                }
            }
            Regularizer::Perlayer { lambda1, lambda2, layers } => {
                for (name, x) in [("lambda1", lambda1), ("lambda2", lambda2)] {
                    if !(*x >= 0.0 && x.is_finite()) {
                        v.push(format!("perlayer regularizer {name} {x} must be non-negative"));
                    }
                }
                for &l in layers {
                    if l == 0 || l > depth {
                        v.push(format!("regularized layer {l} is outside 1..={depth}"));
                    }
                }
            }
        }
        v
    }
}

/// Value and weight gradients of the synthetic regularizer.
pub fn regularizer_synthetic(net: &NetworkSpec, lambda: f64) -> Result<(f64, Vec<Matrix>)> {
    let mut decs = Vec::with_capacity(net.depth());
    let mut log_dets = 0.0;
    let mut norms = Vec::with_capacity(net.depth());
    for (j, layer) in net.layers.iter().enumerate() {
        let w = &layer.weight;
        let dec = svd_thin(w)?;
        let smin = *dec.singular_values.last().expect("non-empty");
        if w.cols() > w.rows() || smin <= rank_tolerance(w, dec.singular_values[0]) {
            return Err(Error::InvalidInput(format!(
                "layer {} lacks full column rank; det(WᵀW)^(-1/2) is unbounded there, use the perlayer regularizer",
                j + 1
            )));
        }
        // det(WᵀW)^{-1/2} = Π σ_i^{-1}
        log_dets -= dec.singular_values.iter().map(|s| s.ln()).sum::<f64>();
        norms.push(dec.singular_values[0]);
        decs.push(dec);
    }
    let det_prod = log_dets.exp();
    let norm_prod: f64 = norms.iter().product();
    let value = lambda * (det_prod + SYNTHETIC_NORM_WEIGHT * norm_prod);
    let grads = decs
        .iter()
        .enumerate()
        .map(|(j, dec)| {
            // ∂ det(WᵀW)^{-1/2} / ∂W = −det(WᵀW)^{-1/2} · U diag(1/σ) Vᵀ
            let mut g = dec.spectral_map(|s| -lambda * det_prod / s);
            let others: f64 = norms
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, n)| n)
                .product();
            let top = dec.outer(0).scale(lambda * SYNTHETIC_NORM_WEIGHT * others);
            g = g.add(&top).expect("same shape");
            g
        })
        .collect();
    Ok((value, grads))
}

/// `λ1 ‖W‖ + λ2 / det(I + WᵀW)` and its gradient.
pub fn regularizer_perlayer(w: &Matrix, lambda1: f64, lambda2: f64) -> Result<(f64, Matrix)> {
    let dec = svd_thin(w)?;
    let log_det: f64 = dec.singular_values.iter().map(|s| (s * s).ln_1p()).sum();
    let inv_det = (-log_det).exp();
    let value = lambda1 * dec.singular_values[0] + lambda2 * inv_det;
    // ∂ det(I+WᵀW)^{-1} / ∂W = −det(I+WᵀW)^{-1} · 2 W (I+WᵀW)^{-1} = −det^{-1} · 2 U diag(σ/(1+σ²)) Vᵀ
    let mut g = dec.spectral_map(|s| -lambda2 * inv_det * 2.0 * s / (1.0 + s * s));
    if dec.singular_values[0] > 0.0 {
        g = g.add(&dec.outer(0).scale(lambda1)).expect("same shape");
    }
    Ok((value, g))
}

/// Value of `reg` and one optional gradient per layer.
pub fn regularizer_value_and_grads(reg: &Regularizer, net: &NetworkSpec) -> Result<(f64, Vec<Option<Matrix>>)> {
    match reg {
        Regularizer::None => Ok((0.0, vec![None; net.depth()])),
        Regularizer::Synthetic { lambda } => {
            let (v, g) = regularizer_synthetic(net, *lambda)?;
            Ok((v, g.into_iter().map(Some).collect()))
        }
        Regularizer::Perlayer { lambda1, lambda2, layers } => {
            let mut grads = vec![None; net.depth()];
            let mut total = 0.0;
            for &l in layers {
                let j = l.checked_sub(1).filter(|&j| j < net.depth()).ok_or_else(|| {
                    Error::InvalidParameter(format!("regularized layer {l} is outside 1..={}", net.depth()))
                })?;
                let (v, g) = regularizer_perlayer(&net.layers[j].weight, *lambda1, *lambda2)?;
                total += v;
                grads[j] = Some(g);
            }
            Ok((total, grads))
        }
    }
}
