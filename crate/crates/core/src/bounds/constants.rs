//! Constants entering the bound prefactor: the kernel bound `B`, the head norm
//! `‖g‖`, activation operator norms `‖K_σ‖`, and isotropy factors `G_j`.
//!
//! Fourier convention: `f(x) = ∫ f̂(ω) e^{ix·ω} dω`, so that
//! `k(x, y) = ∫ e^{i(x−y)·ω} p(ω) dω` reproduces `‖f‖² = ∫ |f̂|² / p`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{numerical_rank, Matrix};
use crate::network::{
    smooth_leaky_relu_derivative, ActivationKind, Head, NetworkSpec,
};
use crate::special::{integrate_half_line, ln_gamma, ln_sphere_area};

fn check_sobolev(d: usize, s: f64) -> Result<()> {
    if d == 0 || !(s > d as f64 / 2.0) || !s.is_finite() {
        return Err(Error::Divergence { d, s });
    }
    Ok(())
}

/// `ln ∫_{R^d} (1+‖ω‖²)^{−s} dω = ln(π^{d/2} Γ(s − d/2) / Γ(s))`.
pub fn ln_kernel_diagonal(d: usize, s: f64) -> Result<f64> {
    check_sobolev(d, s)?;
    let h = d as f64 / 2.0;
    Ok(h * PI.ln() + ln_gamma(s - h) - ln_gamma(s))
}

/// `B = k(x, x)^{1/2}` for the Sobolev kernel of order `s` on `R^d`.
pub fn kernel_trace_bound(d: usize, s: f64) -> Result<f64> {
    Ok((0.5 * ln_kernel_diagonal(d, s)?).exp())
}

/// `ln ‖g‖_{H_p}` for `g(x) = exp(−c‖x‖²)` on `R^d` with `p(ω) = (1+‖ω‖²)^{−s}`.
///
/// `ĝ(ω) = (4πc)^{−d/2} exp(−‖ω‖²/(4c))`, so
/// `‖g‖² = (4πc)^{−d} |S^{d−1}| ∫_0^∞ ρ^{d−1} e^{−ρ²/(2c)} (1+ρ²)^s dρ`.
/// The radial integrand is rescaled by its peak before quadrature.
pub fn gaussian_head_log_norm(d: usize, s: f64, c: f64) -> Result<f64> {
    check_sobolev(d, s)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian head scale c must be positive, got {c}"
        )));
    }
    let dm1 = d as f64 - 1.0;
    let log_integrand = move |rho: f64| {
        let mut v = -rho * rho / (2.0 * c) + s * (rho * rho).ln_1p();
        if dm1 > 0.0 {
            v += dm1 * rho.ln();
        }
        v
    };
    // peak of the log-integrand by a coarse scan then golden refinement
    let hi = (2.0 * c * (s + dm1 + 1.0)).sqrt() * 4.0 + 1.0;
    let peak = maximize(log_integrand, 0.0, hi);
    let shift = log_integrand(peak);
    let integral = integrate_half_line(
        |rho| {
            if rho == 0.0 && dm1 > 0.0 {
                0.0
            } else {
                (log_integrand(rho) - shift).exp()
            }
        },
        1e-12,
    );
    let log_sq = -(d as f64) * (4.0 * PI * c).ln() + ln_sphere_area(d) + shift + integral.ln();
    Ok(0.5 * log_sq)
}

pub fn gaussian_head_norm(d: usize, s: f64, c: f64) -> Result<f64> {
    Ok(gaussian_head_log_norm(d, s, c)?.exp())
}

fn maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 2000;
    let step = (hi - lo) / n as f64;
    let mut best = lo;
    let mut best_v = f(lo);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let v = f(x);
        if v > best_v {
            best_v = v;
            best = x;
        }
    }
    golden_max(&f, (best - step).max(lo), (best + step).min(hi))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    [a, mid, b]
        .into_iter()
        .max_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap()
}

/// Isotropy factor bound `(2c/π)^{k/4}` for a Gaussian downstream function, with
/// `k = dim R(W)^⊥ = rows − rank(W)`.
pub fn g_factor_gaussian(w: &Matrix, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian head scale c must be positive, got {c}"
        )));
    }
    let k = w.rows() - numerical_rank(w)?;
    Ok((2.0 * c / PI).powf(k as f64 / 4.0))
}

/// Grid on which activation derivatives are scanned.
pub const ACTIVATION_GRID_HALF_WIDTH: f64 = 100.0;
pub const ACTIVATION_GRID_POINTS: usize = 20_001;

/// Extremes of an activation derivative over the scan grid and its asymptotes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRange {
    pub inf: f64,
    pub sup: f64,
}

/// Scans `derivative` on `[−100, 100]`, refines the extreme cells, and folds in
/// the asymptotic slopes at `−∞` and `+∞`.
pub fn derivative_range(derivative: impl Fn(f64) -> f64, asymptotes: (f64, f64)) -> DerivativeRange {
    let n = ACTIVATION_GRID_POINTS;
    let a = ACTIVATION_GRID_HALF_WIDTH;
    let step = 2.0 * a / (n - 1) as f64;
    let (mut imin, mut imax) = (0usize, 0usize);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = derivative(-a + i as f64 * step);
        if v < vmin {
            vmin = v;
            imin = i;
        }
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let cell = |i: usize| {
        let x = -a + i as f64 * step;
        ((x - step).max(-a), (x + step).min(a))
    };
    let (lo, hi) = cell(imax);
    let xmax = golden_max(&derivative, lo, hi);
    let (lo, hi) = cell(imin);
    let xmin = golden_max(&|x| -derivative(x), lo, hi);
    let sup = vmax.max(derivative(xmax)).max(asymptotes.0).max(asymptotes.1);
    let inf = vmin.min(derivative(xmin)).min(asymptotes.0).min(asymptotes.1);
    DerivativeRange { inf, sup }
}

/// `‖K_σ‖ ≤ (sup 1/σ′)^d · max{1, sup σ′}` for an elementwise activation on `R^d`.
pub fn elementwise_opnorm_bound(
    name: &str,
    derivative: impl Fn(f64) -> f64,
    asymptotes: (f64, f64),
    d: usize,
) -> Result<f64> {
    let r = derivative_range(derivative, asymptotes);
    if !(r.inf > 0.0) {
        return Err(Error::NotBiLipschitz {
            name: name.to_string(),
            min_derivative: r.inf,
        });
    }
    Ok((1.0 / r.inf).powi(d as i32) * r.sup.max(1.0))
}

/// Operator-norm bound of the Koopman operator of an elementwise activation on `R^d`.
pub fn activation_opnorm_bound(a: &ActivationKind, d: usize) -> Result<f64> {
    if let Some(msg) = a.violations().into_iter().next() {
        return Err(Error::InvalidParameter(msg));
    }
    match a {
        ActivationKind::Identity {} => Ok(1.0),
        ActivationKind::SmoothLeakyRelu { alpha, mu } => {
            let (alpha, mu) = (*alpha, *mu);
            elementwise_opnorm_bound(
                a.name(),
                |x| smooth_leaky_relu_derivative(x, alpha, mu),
                (alpha, 1.0),
                d,
            )
        }
        ActivationKind::Custom {
            derivative_sup,
            inverse_jacobian_sup,
            ..
        } => Ok(inverse_jacobian_sup * derivative_sup.max(1.0)),
    }
}

/// Constants of the bound prefactor `B ‖g‖ / √n` and the per-layer `‖K_σ_j‖`, `G_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n: usize,
    #[serde(rename = "B")]
    pub b: f64,
    pub g_norm: f64,
    pub sigma_norms: Vec<f64>,
    pub g_factors: Vec<f64>,
}

impl BoundConstants {
    /// Unit constants, handy when only the matrix factors matter.
    pub fn unit(n: usize, depth: usize) -> Self {
        Self {
            n,
            b: 1.0,
            g_norm: 1.0,
            sigma_norms: vec![1.0; depth],
            g_factors: vec![1.0; depth],
        }
    }

    pub fn prefactor(&self) -> f64 {
        self.b * self.g_norm / (self.n as f64).sqrt()
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let mut v = Vec::new();
        if self.n == 0 {
            v.push("sample count n must be positive".to_string());
        }
        for (label, x) in [("B", self.b), ("g_norm", self.g_norm)] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{label} {x} must be positive and finite"));
            }
        }
        for (label, xs) in [("sigma_norms", &self.sigma_norms), ("g_factors", &self.g_factors)] {
            if xs.len() != depth {
                v.push(format!("{label} has {} entries for {depth} layers", xs.len()));
            }
            if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                v.push(format!("{label} entry {x} must be positive and finite"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// Defaults derived from the network itself, plus report flags describing any
/// constant that could not be derived rigorously.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub constants: BoundConstants,
    pub flags: Vec<String>,
}

/// Derives `B` from `s_0`, `‖g‖` from a Gaussian head, `‖K_σ_j‖` from each
/// activation, and `G_j` (1 for square full-rank layers, the Gaussian corollary
/// for the last layer under a Gaussian head, otherwise 1 flagged as unnormalized).
///
/// `g_norm` overrides the head norm; it is required for softmax heads.
pub fn derive_constants(net: &NetworkSpec, n: usize, g_norm: Option<f64>) -> Result<DerivedConstants> {
    net.validate()?;
    let mut flags = Vec::new();
    let b = kernel_trace_bound(net.input_dim, net.s_in)?;
    let last_s = net.layers.last().map_or(net.s_in, |l| l.s_out);
    let g_norm = match (g_norm, &net.head) {
        (Some(g), _) => g,
        (None, Head::Gaussian { c }) => gaussian_head_norm(net.output_dim(), last_s, *c)?,
        (None, Head::Custom { h_norm }) => *h_norm,
        (None, Head::Softmax {}) => {
            return Err(Error::InvalidParameter(
                "softmax head needs an explicit g_norm".to_string(),
            ))
        }
    };
    let mut sigma_norms = Vec::with_capacity(net.depth());
    let mut g_factors = Vec::with_capacity(net.depth());
    let last = net.depth() - 1;
    for (j, layer) in net.layers.iter().enumerate() {
        sigma_norms.push(activation_opnorm_bound(&layer.activation, layer.out_dim())?);
        let w = &layer.weight;
        let g = if w.rows() == w.cols() && numerical_rank(w)? == w.cols() {
            1.0
        } else if let (true, Head::Gaussian { c }) = (j == last, &net.head) {
            g_factor_gaussian(w, *c)?
        } else {
            flags.push(format!("layer {}: G unnormalized", j + 1));
            1.0
        };
        g_factors.push(g);
    }
    Ok(DerivedConstants {
        constants: BoundConstants {
            n,
            b,
            g_norm,
            sigma_norms,
            g_factors,
        },
        flags,
    })
}
