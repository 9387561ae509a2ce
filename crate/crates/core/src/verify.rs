//! Self-verification suites: each runs a family of invariants against
//! independent oracles and reports a machine-readable verdict.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::constants::ln_kernel_diagonal;
use crate::bounds::{density_ratio_bound, density_ratio_grid_sup, koopman_layer_factor, RatioGrid};
use crate::error::{Error, Result};
use crate::matcore::{gram_logdet, singular_values, Matrix};
use crate::network::{ActivationKind, Head, LayerSpec, NetworkSpec};
use crate::oracle::{
    empirical_rademacher_lower, gaussian_points, sobolev_gram, sobolev_kernel, ClassConstraint, FunctionClassSpec,
    DEFAULT_CANDIDATES, DEFAULT_DRAWS,
};
use crate::special::{integrate, ln_sphere_area};
use crate::trainer::{
    init_weight, loss_and_grads, mean_loss, regularizer_perlayer, regularizer_synthetic, HeadLoss, InitKind, Targets,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Dominance,
    Gradients,
    Kernels,
    All,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 4] = [Suite::Lemma1, Suite::Dominance, Suite::Gradients, Suite::Kernels];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Dominance => "dominance",
            Suite::Gradients => "gradients",
            Suite::Kernels => "kernels",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::Lemma1, Suite::Dominance, Suite::Gradients, Suite::Kernels, Suite::All]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}; expected lemma1, dominance, gradients, kernels, or all")))
    }
}

/// Default tolerance of every named invariant.
pub const DEFAULT_TOLERANCES: [(&str, f64); 10] = [
    ("orthogonal_factor", 1e-9),
    ("lemma1_slack", 1e-9),
    ("lemma1_reach", 0.99),
    ("oracle_dominance_margin", 0.0),
    ("det_oracle", 1e-8),
    ("kernel_trace", 1e-6),
    ("kernel_closed_form", 1e-6),
    ("gram_psd", 1e-8),
    ("loss_gradient", 1e-4),
    ("regularizer_gradient", 1e-3),
];

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Overrides of [`DEFAULT_TOLERANCES`].
    pub tolerances: BTreeMap<String, f64>,
    pub draws: usize,
    pub candidates: usize,
    pub seeds: Vec<u64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tolerances: BTreeMap::new(),
            draws: DEFAULT_DRAWS,
            candidates: DEFAULT_CANDIDATES,
            seeds: vec![0, 1, 2],
        }
    }
}

impl VerifyOptions {
    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|p| p.1)
                .expect("known tolerance name")
        })
    }

    /// Parses `name=value` and records the override.
    pub fn set_tolerance(&mut self, spec: &str) -> Result<()> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("tolerance override {spec:?} is not name=value")))?;
        if !DEFAULT_TOLERANCES.iter().any(|(n, _)| *n == name) {
            let known: Vec<&str> = DEFAULT_TOLERANCES.iter().map(|p| p.0).collect();
            return Err(Error::InvalidInput(format!("unknown tolerance {name:?}; known: {}", known.join(", "))));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("tolerance {name} value {value:?} is not a number")))?;
        self.tolerances.insert(name.to_string(), v);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Name of the invariant.
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Wall-clock seconds; not serialized so verdicts stay byte-stable.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name: name.to_string(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Verdict {
    let checks = match suite {
        Suite::Lemma1 => vec![
            timed("orthogonal_factor", || check_orthogonal_factor(opts)),
            timed("lemma1_dominance", || check_lemma1(opts)),
        ],
        Suite::Dominance => vec![timed("oracle_dominance", || check_oracle_dominance(opts))],
        Suite::Gradients => vec![
            timed("loss_gradient", || check_loss_gradients(opts)),
            timed("regularizer_gradient", || check_regularizer_gradients(opts)),
        ],
        Suite::Kernels => vec![
            timed("det_oracle", || check_det_oracle(opts)),
            timed("kernel_trace", || check_kernel_trace(opts)),
            timed("kernel_closed_form", || check_kernel_closed_form(opts)),
            timed("gram_psd", || check_gram_psd(opts)),
        ],
        Suite::All => Suite::INDIVIDUAL
            .iter()
            .flat_map(|s| run_suite(*s, opts).checks)
            .collect(),
    };
    Verdict {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("finite")
}

/// Orthogonal factor is 1 for 200 orthogonal matrices, `d ∈ 2..=8`, `s ∈ {d/2+0.05, d/2+1}`.
pub fn check_orthogonal_factor(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("orthogonal_factor");
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f7);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let d = 2 + k % 7;
        let q = init_weight(InitKind::Orthogonal, d, d, &mut rng);
        for s in [d as f64 / 2.0 + 0.05, d as f64 / 2.0 + 1.0] {
            worst = worst.max((koopman_layer_factor(&q, s)? - 1.0).abs());
        }
    }
    Ok((worst <= tol, format!("max |factor - 1| = {worst:.3e} over 200 matrices (tol {tol:e})")))
}

/// Grid sup never exceeds the closed form and reaches it when `σ_max > 1`.
pub fn check_lemma1(opts: &VerifyOptions) -> Result<(bool, String)> {
    let slack = opts.tolerance("lemma1_slack");
    let reach = opts.tolerance("lemma1_reach");
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e);
    let grid = RatioGrid::default();
    let (mut max_excess, mut min_reach) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..100 {
        let d = 1 + k % 6;
        let g = gaussian(d, d, &mut rng);
        let target = 10f64.powf(rng.random_range(-1.0..1.0));
        let w = g.scale(target / singular_values(&g)?[0]);
        let s = (d as f64 + 0.1) / 2.0;
        let sup = density_ratio_grid_sup(&w, s, s, &grid)?;
        let closed = density_ratio_bound(&w, s)?;
        max_excess = max_excess.max(sup - closed);
        if target > 1.0 {
            min_reach = min_reach.min(sup / closed);
        }
    }
    Ok((
        max_excess <= slack && min_reach >= reach,
        format!("max(grid - closed) = {max_excess:.3e} (slack {slack:e}); min grid/closed for sigma_max > 1 = {min_reach:.6} (need {reach})"),
    ))
}

/// Two-dimensional classes used by the dominance suite.
pub fn dominance_class(depth: usize) -> FunctionClassSpec {
    FunctionClassSpec::new(
        vec![2; depth + 1],
        ActivationKind::smooth_leaky_relu(0.5, 0.5),
        Head::gaussian(1.0),
        ClassConstraint::Inv { c: 1.5, d: 0.5 },
        1.0,
    )
}

/// Monte-Carlo lower estimate stays strictly below the class bound for every seed.
pub fn check_oracle_dominance(opts: &VerifyOptions) -> Result<(bool, String)> {
    let margin = opts.tolerance("oracle_dominance_margin");
    let n = 20;
    let points = gaussian_points(n, 2, 0xd0);
    let mut ok = true;
    let mut parts = Vec::new();
    for depth in [1, 2] {
        let spec = dominance_class(depth);
        let bound = spec.upper_bound(n)?;
        for &seed in &opts.seeds {
            let est = empirical_rademacher_lower(&points, &spec, opts.draws, opts.candidates, seed)?;
            ok &= est.value < bound - margin;
            parts.push(format!(
                "L={depth} seed={seed}: {:.4} < {:.4} (acceptance {:.3})",
                est.value, bound, est.acceptance_rate
            ));
        }
    }
    Ok((ok, parts.join("; ")))
}

/// Network with Gaussian weights of scale `0.7/√fan_in·√2`, uniform biases in `[−0.5, 0.5]`.
pub fn random_network(widths: &[usize], head: Head, seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = widths.len() - 1;
    let layers = (0..depth)
        .map(|j| {
            let w = init_weight(InitKind::Kaiming, widths[j + 1], widths[j], &mut rng);
            let b = (0..widths[j + 1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            let act = if j + 1 == depth {
                ActivationKind::identity()
            } else {
                ActivationKind::smooth_leaky_relu(0.5, 0.5)
            };
            LayerSpec::new(w, b, act, (widths[j + 1] as f64 + 0.1) / 2.0)
        })
        .collect();
    NetworkSpec {
        input_dim: widths[0],
        s_in: (widths[0] as f64 + 0.1) / 2.0,
        layers,
        head,
    }
}

/// `|a − b| / max(|a| + |b|, 1e-6)`.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Parameter coordinates `(layer, is_bias, index)` to probe: all of them when
/// there are at most `cap`, otherwise a seeded sample of `cap`.
fn coordinates(net: &NetworkSpec, cap: usize, rng: &mut impl Rng) -> Vec<(usize, bool, usize)> {
    let all: Vec<(usize, bool, usize)> = net
        .layers
        .iter()
        .enumerate()
        .flat_map(|(j, l)| {
            (0..l.weight.as_slice().len())
                .map(move |i| (j, false, i))
                .chain((0..l.bias.len()).map(move |i| (j, true, i)))
        })
        .collect();
    if all.len() <= cap {
        return all;
    }
    rand::seq::index::sample(rng, all.len(), cap)
        .into_iter()
        .map(|i| all[i])
        .collect()
}

fn perturb(net: &NetworkSpec, (j, bias, i): (usize, bool, usize), h: f64) -> NetworkSpec {
    let mut p = net.clone();
    if bias {
        p.layers[j].bias[i] += h;
    } else {
        p.layers[j].weight.as_mut_slice()[i] += h;
    }
    p
}

/// Loss gradients vs central differences on 20 random nets per architecture.
pub fn check_loss_gradients(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("loss_gradient");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9a + seed);
        let cases = [
            (
                random_network(&[3, 3, 6], Head::gaussian(1.0), seed),
                gaussian(8, 3, &mut rng),
                Targets::Values((0..8).map(|_| rng.random_range(0.0..1.0)).collect()),
                HeadLoss::Squared,
            ),
            (
                random_network(&[64, 128, 128, 10], Head::Softmax {}, 1000 + seed),
                gaussian(8, 64, &mut rng),
                Targets::Classes((0..8).map(|_| rng.random_range(0..10)).collect()),
                HeadLoss::CrossEntropy,
            ),
        ];
        for (net, x, y, loss) in &cases {
            let (_, g) = loss_and_grads(net, x, y, *loss)?;
            for c in coordinates(net, 60, &mut rng) {
                let num = (mean_loss(&perturb(net, c, h), x, y, *loss)? - mean_loss(&perturb(net, c, -h), x, y, *loss)?)
                    / (2.0 * h);
                let ana = if c.1 { g.biases[c.0][c.2] } else { g.weights[c.0].as_slice()[c.2] };
                worst = worst.max(rel_err(ana, num));
                probes += 1;
            }
        }
    }
    Ok((worst < tol, format!("max relative error {worst:.3e} over {probes} coordinates (tol {tol:e})")))
}

fn spectral_gap_ok(w: &Matrix) -> Result<bool> {
    let sv = singular_values(w)?;
    Ok(sv.len() < 2 || sv[0] - sv[1] >= 1e-3)
}

/// Regularizer gradients vs central differences, skipping layers with `σ₁ − σ₂ < 1e-3`.
pub fn check_regularizer_gradients(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("regularizer_gradient");
    let h = 1e-6;
    let (lambda, l1, l2) = (0.01, 0.01, 0.01);
    let mut worst: f64 = 0.0;
    let (mut probes, mut skipped) = (0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7e + seed);
        let small = random_network(&[3, 3, 6], Head::gaussian(1.0), seed);
        if small.layers.iter().all(|l| spectral_gap_ok(&l.weight).unwrap_or(false)) {
            let (_, g) = regularizer_synthetic(&small, lambda)?;
            for c in coordinates(&small, usize::MAX, &mut rng).into_iter().filter(|c| !c.1) {
                let num = (regularizer_synthetic(&perturb(&small, c, h), lambda)?.0
                    - regularizer_synthetic(&perturb(&small, c, -h), lambda)?.0)
                    / (2.0 * h);
                worst = worst.max(rel_err(g[c.0].as_slice()[c.2], num));
                probes += 1;
            }
        } else {
            skipped += 1;
        }
        let big = random_network(&[64, 128, 128, 10], Head::Softmax {}, 1000 + seed);
        for net in [&small, &big] {
            for j in 0..2 {
                let w = &net.layers[j].weight;
                if !spectral_gap_ok(w)? {
                    skipped += 1;
                    continue;
                }
                let (_, g) = regularizer_perlayer(w, l1, l2)?;
                let n = w.as_slice().len();
                let idx: Vec<usize> = if n <= 30 { (0..n).collect() } else { rand::seq::index::sample(&mut rng, n, 30).into_vec() };
                for i in idx {
                    let mut p = w.clone();
                    p.as_mut_slice()[i] += h;
                    let mut m = w.clone();
                    m.as_mut_slice()[i] -= h;
                    let num = (regularizer_perlayer(&p, l1, l2)?.0 - regularizer_perlayer(&m, l1, l2)?.0) / (2.0 * h);
                    worst = worst.max(rel_err(g.as_slice()[i], num));
                    probes += 1;
                }
            }
        }
    }
    Ok((
        worst < tol,
        format!("max relative error {worst:.3e} over {probes} coordinates, {skipped} near-degenerate skipped (tol {tol:e})"),
    ))
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(m: &Matrix) -> f64 {
    let n = m.rows();
    if n == 1 {
        return m.get(0, 0);
    }
    (0..n)
        .map(|j| {
            let minor: Vec<f64> = (1..n)
                .flat_map(|i| (0..n).filter(move |&c| c != j).map(move |c| (i, c)))
                .map(|(i, c)| m.get(i, c))
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m.get(0, j) * cofactor_det(&Matrix::new(n - 1, n - 1, minor).expect("finite minor"))
        })
        .sum()
}

/// `exp(gram_logdet/2)` vs cofactor `|det|` on 500 matrices up to 4×4.
pub fn check_det_oracle(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("det_oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7);
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let d = 1 + k % 4;
        let w = gaussian(d, d, &mut rng);
        let svd_det = (gram_logdet(&w)? / 2.0).exp();
        let cof = cofactor_det(&w).abs();
        worst = worst.max((svd_det - cof).abs() / cof);
    }
    Ok((worst < tol, format!("max relative error {worst:.3e} (tol {tol:e})")))
}

/// `∫_{R^d} (1+‖ω‖²)^{−s} dω = |S^{d−1}| ∫_0^{π/2} sin^{d−1}θ cos^{2s−d−1}θ dθ` after `ρ = tan θ`.
pub fn kernel_diagonal_quadrature(d: usize, s: f64) -> f64 {
    let radial = integrate(
        |t: f64| t.sin().powi(d as i32 - 1) * t.cos().powf(2.0 * s - d as f64 - 1.0),
        0.0,
        FRAC_PI_2,
        1e-13,
    );
    ln_sphere_area(d).exp() * radial
}

/// `kernel_trace_bound` vs quadrature for `(d, s) ∈ {(1, 1), (2, 1.55), (3, 2)}`.
pub fn check_kernel_trace(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("kernel_trace");
    let mut worst: f64 = 0.0;
    for (d, s) in [(1, 1.0), (2, 1.55), (3, 2.0)] {
        let closed = (0.5 * ln_kernel_diagonal(d, s)?).exp();
        let quad = kernel_diagonal_quadrature(d, s).sqrt();
        worst = worst.max((closed - quad).abs() / quad);
    }
    Ok((worst < tol, format!("max relative error {worst:.3e} (tol {tol:e})")))
}

/// `sobolev_kernel(d=1, s=1)` vs `π e^{−|x−y|}` at 20 separations.
pub fn check_kernel_closed_form(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("kernel_closed_form");
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let r = 0.1 + 0.25 * i as f64;
        let k = sobolev_kernel(&[-0.4], &[-0.4 + r], 1, 1.0)?;
        let exact = PI * (-r).exp();
        worst = worst.max((k - exact).abs() / exact);
    }
    Ok((worst < tol, format!("max relative error {worst:.3e} (tol {tol:e})")))
}

/// Minimum Gram eigenvalue over 50 random 20-point sets.
pub fn check_gram_psd(opts: &VerifyOptions) -> Result<(bool, String)> {
    let tol = opts.tolerance("gram_psd");
    let mut lowest = f64::INFINITY;
    for k in 0..50u64 {
        let (d, s) = [(1, 1.0), (2, 1.55), (3, 2.0)][k as usize % 3];
        let pts = gaussian_points(20, d, 0x9a + k);
        let g = sobolev_gram(&pts, d, s)?;
        let m = DMatrix::from_row_slice(20, 20, g.as_slice());
        let min = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        lowest = lowest.min(min);
    }
    Ok((lowest >= -tol, format!("min eigenvalue {lowest:.3e} (need >= -{tol:e})")))
}
