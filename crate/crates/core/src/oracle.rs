//! Independent checks on the bounds: the Sobolev reproducing kernel, the
//! RKHS-ball Rademacher chain, and Monte-Carlo lower estimates of empirical
//! Rademacher complexity over weight-constrained network classes.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    activation_opnorm_bound, class_bound_invertible, gaussian_head_norm, kernel_trace_bound,
    BoundConstants,
};
use crate::bounds::constants::ln_kernel_diagonal;
use crate::error::{Error, Result};
use crate::matcore::{singular_values, Matrix};
use crate::network::{default_smoothness, ActivationKind, Head};
use crate::special::{ln_gamma, ln_r_pow_bessel_k};

/// Rejection attempts allowed per sampled weight matrix.
pub const REJECTION_CAP: usize = 100_000;
pub const DEFAULT_DRAWS: usize = 2000;
pub const DEFAULT_CANDIDATES: usize = 500;

fn check_points(points: &[Vec<f64>], d: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("point set is empty".to_string()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Shape(format!("point of dimension {} in R^{d}", p.len())));
    }
    Ok(())
}

/// `k(x, y) = ∫_{R^d} e^{i(x−y)·ω} (1+‖ω‖²)^{−s} dω`
/// `= (2π)^{d/2} 2^{1−s} / Γ(s) · r^ν K_ν(r)` with `r = ‖x−y‖`, `ν = s − d/2`.
///
/// At `r = 0` the limit `π^{d/2} Γ(ν) / Γ(s)` is used.
pub fn sobolev_kernel(x: &[f64], y: &[f64], d: usize, s: f64) -> Result<f64> {
    if x.len() != d || y.len() != d {
        return Err(Error::Shape(format!(
            "kernel arguments have dimensions {} and {}, expected {d}",
            x.len(),
            y.len()
        )));
    }
    let diag = ln_kernel_diagonal(d, s)?;
    let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if r == 0.0 {
        return Ok(diag.exp());
    }
    let h = d as f64 / 2.0;
    let ln_k = h * (2.0 * PI).ln() + (1.0 - s) * LN_2 - ln_gamma(s) + ln_r_pow_bessel_k(s - h, r);
    // the closed form cannot exceed its r → 0 limit; guard against quadrature roundoff
    Ok(ln_k.min(diag).exp())
}

/// Gram matrix `[k(x_i, x_j)]`.
pub fn sobolev_gram(points: &[Vec<f64>], d: usize, s: f64) -> Result<Matrix> {
    check_points(points, d)?;
    let n = points.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = sobolev_kernel(&points[i], &points[j], d, s)?;
            g.set(i, j, k);
            g.set(j, i, k);
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkhsRademacher {
    /// `(radius/n) (Σ_i k(x_i, x_i))^{1/2}`.
    pub exact: f64,
    /// `radius · B / √n`.
    pub bound: f64,
}

/// Rademacher complexity chain for the ball of `radius` in the Sobolev RKHS.
pub fn rkhs_ball_rademacher(points: &[Vec<f64>], radius: f64, d: usize, s: f64) -> Result<RkhsRademacher> {
    check_points(points, d)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
    }
    let n = points.len() as f64;
    let trace: f64 = points
        .iter()
        .map(|p| sobolev_kernel(p, p, d, s))
        .sum::<Result<f64>>()?;
    Ok(RkhsRademacher {
        exact: radius / n * trace.sqrt(),
        bound: radius * kernel_trace_bound(d, s)? / n.sqrt(),
    })
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Accepted fraction of weight proposals (1 for finite classes).
    pub acceptance_rate: f64,
}

/// Rng for draw `k` of the master `seed`: same seed, stream `k`. Independent of
/// scheduling and thread count.
fn draw_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k as u64);
    r
}

fn signs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn correlation(signs: &[f64], values: &[f64]) -> f64 {
    signs.iter().zip(values).map(|(s, v)| s * v).sum::<f64>() / signs.len() as f64
}

fn summarize(per_draw: &[f64], acceptance_rate: f64) -> LowerEstimate {
    let m = per_draw.len() as f64;
    let mean = per_draw.iter().sum::<f64>() / m;
    let var = if per_draw.len() > 1 {
        per_draw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    LowerEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        acceptance_rate,
    }
}

fn check_outputs(outputs: &[Vec<f64>]) -> Result<usize> {
    let n = outputs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("function class is empty".to_string()))?;
    if n == 0 || outputs.iter().any(|o| o.len() != n) {
        return Err(Error::Shape("every function needs one value per point".to_string()));
    }
    Ok(n)
}

/// `E_s max_f (1/n) Σ_i s_i f(x_i)` over a finite class given by its values at the points.
pub fn rademacher_lower_finite(outputs: &[Vec<f64>], draws: usize, seed: u64) -> Result<LowerEstimate> {
    let n = check_outputs(outputs)?;
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be at least 1".to_string()));
    }
    let per: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let s = signs(&mut draw_rng(seed, k), n);
            outputs
                .iter()
                .map(|o| correlation(&s, o))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(summarize(&per, 1.0))
}

/// Exact empirical Rademacher complexity of a finite class by enumerating all `2^n` sign vectors.
pub fn rademacher_exact_finite(outputs: &[Vec<f64>]) -> Result<f64> {
    let n = check_outputs(outputs)?;
    if n > 24 {
        return Err(Error::InvalidParameter(format!("exact enumeration over 2^{n} sign vectors is too large")));
    }
    let total: f64 = (0u64..1 << n)
        .into_par_iter()
        .map(|mask| {
            let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            outputs
                .iter()
                .map(|o| correlation(&s, o))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / (1u64 << n) as f64)
}

/// Weight constraint of a function class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassConstraint {
    /// Square layers with `‖W‖ ≤ C`, `|det W| ≥ D`.
    Inv { c: f64, d: f64 },
    /// Tall or square layers with `‖W‖ ≤ C`, `det(WᵀW)^{1/2} ≥ D`.
    Inj { c: f64, d: f64 },
}

impl ClassConstraint {
    fn caps(&self) -> (f64, f64) {
        match *self {
            ClassConstraint::Inv { c, d } | ClassConstraint::Inj { c, d } => (c, d),
        }
    }
}

/// Networks `g ∘ b_L ∘ W_L ∘ σ ∘ … ∘ σ ∘ b_1 ∘ W_1` with fixed `σ`, `g` and constrained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClassSpec {
    /// `d_0, …, d_L`.
    pub widths: Vec<usize>,
    /// Activation after every layer but the last.
    pub activation: ActivationKind,
    pub head: Head,
    pub constraint: ClassConstraint,
    /// Biases range over the closed ball of this radius.
    pub bias_bound: f64,
    /// `s_0, …, s_L`.
    pub smoothness: Vec<f64>,
}

impl FunctionClassSpec {
    /// Class with the default smoothness `(d_j + 0.1)/2`.
    pub fn new(widths: Vec<usize>, activation: ActivationKind, head: Head, constraint: ClassConstraint, bias_bound: f64) -> Self {
        let smoothness = widths.iter().map(|&d| default_smoothness(d)).collect();
        Self {
            widths,
            activation,
            head,
            constraint,
            bias_bound,
            smoothness,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.widths.len() < 2 || self.widths.contains(&0) {
            v.push("widths need at least two positive entries".to_string());
            return v;
        }
        let (c, d) = self.constraint.caps();
        if !(c > 0.0 && c.is_finite() && d > 0.0 && d.is_finite()) {
            v.push(format!("constraints need C > 0 and D > 0, got C = {c}, D = {d}"));
        }
        for j in 0..self.depth() {
            let (rows, cols) = (self.widths[j + 1], self.widths[j]);
            match self.constraint {
                ClassConstraint::Inv { .. } if rows != cols => {
                    v.push(format!("layer {} is {rows}x{cols}; the inv class needs square layers", j + 1))
                }
                ClassConstraint::Inj { .. } if rows < cols => {
                    v.push(format!("layer {} is {rows}x{cols}; the inj class needs rows >= cols", j + 1))
                }
                _ => {}
            }
            // Π σ_i ≤ C^{cols} for ‖W‖ ≤ C
            if d > c.powi(cols as i32) {
                v.push(format!("layer {}: D = {d} exceeds C^{cols} = {}, the class is empty", j + 1, c.powi(cols as i32)));
            }
        }
        if !(self.bias_bound >= 0.0 && self.bias_bound.is_finite()) {
            v.push(format!("bias bound {} must be non-negative", self.bias_bound));
        }
        if self.smoothness.len() != self.widths.len() {
            v.push(format!("{} smoothness exponents for {} widths", self.smoothness.len(), self.widths.len()));
        }
        if !matches!(self.head, Head::Gaussian { c } if c > 0.0 && c.is_finite()) {
            v.push("sampling needs a gaussian head with positive c".to_string());
        }
        v.extend(self.activation.violations());
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

    fn head_c(&self) -> f64 {
        match self.head {
            Head::Gaussian { c } => c,
            _ => unreachable!("validated"),
        }
    }

    /// Koopman upper bound on the empirical Rademacher complexity of the whole class:
    /// `B‖g‖/√n · Π_j ‖K_σ_j‖ max{1, C^{s_{j−1}}} / √D`, with `‖K_σ_L‖ = 1` for the linear last layer.
    pub fn upper_bound(&self, n: usize) -> Result<f64> {
        self.validate()?;
        let ClassConstraint::Inv { c, d } = self.constraint else {
            return Err(Error::Inapplicable {
                variant: "class".to_string(),
                layer: self.depth(),
                reason: "non-square layers need a sup of G_j over the class, which is not available".to_string(),
            });
        };
        let depth = self.depth();
        let sigma_norms = (0..depth)
            .map(|j| {
                if j + 1 == depth {
                    Ok(1.0)
                } else {
                    activation_opnorm_bound(&self.activation, self.widths[j + 1])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let consts = BoundConstants {
            n,
            b: kernel_trace_bound(self.widths[0], self.smoothness[0])?,
            g_norm: gaussian_head_norm(self.widths[depth], self.smoothness[depth], self.head_c())?,
            sigma_norms,
            g_factors: vec![1.0; depth],
        };
        class_bound_invertible(&consts, &self.smoothness[..depth], c, d)
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("finite gaussian entries")
}

/// One admissible weight matrix and the number of proposals it took.
fn sample_weight(rows: usize, cols: usize, c: f64, d: f64, rng: &mut impl Rng) -> Result<(Matrix, usize)> {
    for attempt in 1..=REJECTION_CAP {
        let mut w = gaussian_matrix(rows, cols, rng);
        let mut sv = singular_values(&w)?;
        if sv[0] > c {
            let k = c / sv[0];
            w = w.scale(k);
            sv.iter_mut().for_each(|x| *x *= k);
        }
        // |det W| for square layers, det(WᵀW)^{1/2} otherwise
        let vol = sv.iter().map(|x| x.ln()).sum::<f64>();
        if vol >= d.ln() {
            return Ok((w, attempt));
        }
    }
    Err(Error::Infeasible { attempts: REJECTION_CAP })
}

fn sample_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    if radius == 0.0 {
        return vec![0.0; dim];
    }
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= r / norm);
    v
}

struct Candidate {
    layers: Vec<(Matrix, Vec<f64>)>,
}

impl Candidate {
    fn eval(&self, spec: &FunctionClassSpec, x: &[f64]) -> Result<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (j, (w, b)) in self.layers.iter().enumerate() {
            let mut z = w.mat_vec(&h);
            z.iter_mut().zip(b).for_each(|(z, b)| *z += b);
            if j < last {
                for v in &mut z {
                    *v = spec.activation.eval(*v)?.0;
                }
            }
            h = z;
        }
        Ok((-spec.head_c() * h.iter().map(|v| v * v).sum::<f64>()).exp())
    }
}

/// Average over `draws` sign vectors of the best correlation among `candidates`
/// networks sampled from the class. A lower estimate of the empirical Rademacher
/// complexity, deterministic in `seed`.
pub fn empirical_rademacher_lower(
    points: &[Vec<f64>],
    spec: &FunctionClassSpec,
    draws: usize,
    candidates: usize,
    seed: u64,
) -> Result<LowerEstimate> {
    spec.validate()?;
    check_points(points, spec.widths[0])?;
    if draws == 0 || candidates == 0 {
        return Err(Error::InvalidParameter("draws and candidates must be at least 1".to_string()));
    }
    let (c, d) = spec.constraint.caps();
    let n = points.len();
    let per: Vec<(f64, usize)> = (0..draws)
        .into_par_iter()
        .map(|k| -> Result<(f64, usize)> {
            let mut rng = draw_rng(seed, k);
            let s = signs(&mut rng, n);
            let mut best = f64::NEG_INFINITY;
            let mut proposals = 0;
            let mut values = vec![0.0; n];
            for _ in 0..candidates {
                let mut layers = Vec::with_capacity(spec.depth());
                for j in 0..spec.depth() {
                    let (w, tries) = sample_weight(spec.widths[j + 1], spec.widths[j], c, d, &mut rng)?;
                    proposals += tries;
                    layers.push((w, sample_ball(spec.widths[j + 1], spec.bias_bound, &mut rng)));
                }
                let cand = Candidate { layers };
                for (v, p) in values.iter_mut().zip(points) {
                    *v = cand.eval(spec, p)?;
                }
                best = best.max(correlation(&s, &values));
            }
            Ok((best, proposals))
        })
        .collect::<Result<_>>()?;
    let accepted = (draws * candidates * spec.depth()) as f64;
    let proposals: usize = per.iter().map(|p| p.1).sum();
    let values: Vec<f64> = per.iter().map(|p| p.0).collect();
    Ok(summarize(&values, accepted / proposals as f64))
}

/// `n` standard-normal points in `R^d`.
pub fn gaussian_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate_half_line;
    use nalgebra::{DMatrix, SymmetricEigen};

    #[test]
    fn kernel_one_dimensional_closed_form() {
        // d = 1, s = 1: ∫ cos(rω)/(1+ω²) dω = π e^{−r}
        for i in 0..20 {
            let r = 0.05 + 0.3 * i as f64;
            let k = sobolev_kernel(&[0.3], &[0.3 + r], 1, 1.0).unwrap();
            assert!((k - PI * (-r).exp()).abs() < 1e-9 * k, "r = {r}");
        }
        let k1 = sobolev_kernel(&[0.0], &[1.0], 1, 1.0).unwrap();
        assert!((k1 - 1.155_727_349_790_921_7).abs() < 1e-9);
    }

    #[test]
    fn kernel_matches_quadrature_in_one_dimension() {
        // ∫_R cos(rω) (1+ω²)^{−s} dω with an exponentially damped Abel-type split is
        // awkward for oscillatory tails; use s large enough for absolute convergence
        for (s, r) in [(1.5, 0.7), (2.0, 1.3), (2.5, 0.4)] {
            let q = 2.0 * integrate_half_line(|w| (r * w).cos() * (1.0 + w * w).powf(-s), 1e-12);
            let k = sobolev_kernel(&[0.0], &[r], 1, s).unwrap();
            assert!((k - q).abs() < 1e-6 * q, "s {s} r {r}: {k} vs {q}");
        }
    }

    #[test]
    fn kernel_diagonal_and_symmetry() {
        for (d, s) in [(1, 1.0), (2, 1.55), (3, 2.0), (6, 3.05)] {
            let x: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
            let y: Vec<f64> = (0..d).map(|i| 0.5 - 0.2 * i as f64).collect();
            let b = kernel_trace_bound(d, s).unwrap();
            assert!((sobolev_kernel(&x, &x, d, s).unwrap() - b * b).abs() < 1e-12 * b * b);
            assert_eq!(sobolev_kernel(&x, &y, d, s).unwrap(), sobolev_kernel(&y, &x, d, s).unwrap());
            // near the origin r^ν K_ν(r) ≈ ½Γ(ν)2^ν + ½Γ(−ν)2^{−ν} r^{2ν} for 0 < ν < 1
            let r = 1e-7;
            let mut z = x.clone();
            z[0] += r;
            let near = sobolev_kernel(&x, &z, d, s).unwrap();
            let nu = s - d as f64 / 2.0;
            let expect = if nu < 1.0 {
                let g = crate::special::gamma;
                b * b * (1.0 + g(-nu) / g(nu) * (r / 2.0).powf(2.0 * nu))
            } else {
                b * b
            };
            assert!((near - expect).abs() < 1e-4 * b * b, "d {d} s {s}: {near} vs {expect}");
        }
        assert!(matches!(sobolev_kernel(&[0.0], &[1.0], 1, 0.5), Err(Error::Divergence { .. })));
    }

    fn min_eigenvalue(g: &Matrix) -> f64 {
        let m = DMatrix::from_row_slice(g.rows(), g.cols(), g.as_slice());
        SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        for seed in 0..10 {
            let pts = gaussian_points(20, 2, seed);
            let g = sobolev_gram(&pts, 2, 1.55).unwrap();
            assert!(min_eigenvalue(&g) >= -1e-8);
        }
    }

    #[test]
    fn rkhs_chain() {
        let one = rkhs_ball_rademacher(&[vec![0.2, -0.1]], 2.0, 2, 1.55).unwrap();
        let b = kernel_trace_bound(2, 1.55).unwrap();
        assert!((one.exact - 2.0 * b).abs() < 1e-12 * b);
        assert!((one.bound - 2.0 * b).abs() < 1e-12 * b);

        let pts = gaussian_points(10, 1, 4);
        let r = rkhs_ball_rademacher(&pts, 1.5, 1, 1.0).unwrap();
        let g = sobolev_gram(&pts, 1, 1.0).unwrap();
        let trace: f64 = (0..10).map(|i| g.get(i, i)).sum();
        assert!((r.exact - 1.5 / 10.0 * trace.sqrt()).abs() < 1e-10);
        assert!(r.exact <= r.bound * (1.0 + 1e-12));
    }

    #[test]
    fn finite_class_estimates() {
        let f: Vec<f64> = (0..10).map(|i| (0.3 * i as f64).sin()).collect();
        let single = rademacher_lower_finite(&[f.clone()], 2000, 7).unwrap();
        assert!(single.value.abs() < 3.0 / 2000f64.sqrt());

        let pair = vec![f.clone(), f.iter().map(|v| -v).collect()];
        let exact = rademacher_exact_finite(&pair).unwrap();
        // E|Σ s_i f_i| / n by direct enumeration
        let direct: f64 = (0u32..1024)
            .map(|m| (0..10).map(|i| if m >> i & 1 == 1 { f[i] } else { -f[i] }).sum::<f64>().abs())
            .sum::<f64>()
            / 1024.0
            / 10.0;
        assert!((exact - direct).abs() < 1e-14);
        let mc = rademacher_lower_finite(&pair, 400_000, 3).unwrap();
        assert!((mc.value - exact).abs() < 1e-3, "{} vs {exact}", mc.value);
    }

    fn tiny_class(c: f64, d: f64, depth: usize) -> FunctionClassSpec {
        FunctionClassSpec::new(
            vec![2; depth + 1],
            ActivationKind::smooth_leaky_relu(0.5, 0.5),
            Head::gaussian(1.0),
            ClassConstraint::Inv { c, d },
            1.0,
        )
    }

    #[test]
    fn sampled_weights_respect_the_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (w, _) = sample_weight(2, 2, 1.5, 0.5, &mut rng).unwrap();
            let sv = singular_values(&w).unwrap();
            assert!(sv[0] <= 1.5 * (1.0 + 1e-12));
            assert!(sv[0] * sv[1] >= 0.5);
        }
        assert!(matches!(
            sample_weight(2, 2, 1.0, 1.0 - 1e-12, &mut rng),
            Err(Error::Infeasible { .. })
        ));
        assert!(tiny_class(1.0, 1.5, 1).validate().is_err());
    }

    #[test]
    fn lower_estimate_is_deterministic_and_below_the_bound() {
        let pts = gaussian_points(20, 2, 11);
        let spec = tiny_class(1.5, 0.5, 1);
        let a = empirical_rademacher_lower(&pts, &spec, 50, 20, 5).unwrap();
        assert_eq!(a, empirical_rademacher_lower(&pts, &spec, 50, 20, 5).unwrap());
        assert!(a.value > 0.0 && a.acceptance_rate > 0.0 && a.acceptance_rate <= 1.0);
        assert!(a.value < spec.upper_bound(20).unwrap());
    }

    #[test]
    fn larger_class_is_not_smaller() {
        let pts = gaussian_points(20, 2, 12);
        let small = empirical_rademacher_lower(&pts, &tiny_class(1.0, 0.5, 1), 300, 40, 9).unwrap();
        let large = empirical_rademacher_lower(&pts, &tiny_class(3.0, 0.5, 1), 300, 40, 9).unwrap();
        assert!(large.value >= small.value - 3.0 * (small.std_error + large.std_error));
    }

    #[test]
    fn inj_class_has_no_upper_bound() {
        let spec = FunctionClassSpec::new(
            vec![2, 3],
            ActivationKind::identity(),
            Head::gaussian(1.0),
            ClassConstraint::Inj { c: 2.0, d: 0.5 },
            0.0,
        );
        assert!(matches!(spec.upper_bound(10), Err(Error::Inapplicable { .. })));
        let pts = gaussian_points(5, 2, 0);
        assert!(empirical_rademacher_lower(&pts, &spec, 4, 4, 0).is_ok());
    }
}
