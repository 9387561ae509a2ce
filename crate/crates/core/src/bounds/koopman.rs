//! Koopman-operator bounds and their per-layer factors.
//!
//! All products are accumulated in log space; a total may overflow to `+∞` for
//! wide, badly conditioned layers but never to NaN.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::constants::BoundConstants;
use super::Variant;
use crate::error::{Error, Result};
use crate::matcore::{
    operator_norm, rank_tolerance, restricted_det_from_singular_values, svd_thin, Matrix,
};
use crate::network::NetworkSpec;

/// Singular values and norms of one weight matrix, computed once and shared by
/// every variant.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpectrum {
    pub rows: usize,
    pub cols: usize,
    /// Descending, length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    pub frobenius: f64,
    pub tol: f64,
    pub rank: usize,
}

impl LayerSpectrum {
    pub fn of(w: &Matrix) -> Result<Self> {
        let singular_values = crate::matcore::singular_values(w)?;
        let tol = rank_tolerance(w, singular_values[0]);
        let rank = singular_values.iter().filter(|&&s| s > tol).count();
        Ok(Self {
            rows: w.rows(),
            cols: w.cols(),
            singular_values,
            frobenius: w.frobenius_norm(),
            tol,
            rank,
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("non-empty spectrum")
    }

    pub fn full_column_rank(&self) -> bool {
        self.cols <= self.rows && self.rank == self.cols
    }

    /// `ln det(WᵀW)^{1/4}` when `W` has full column rank.
    pub fn log_det_factor(&self) -> Option<f64> {
        self.full_column_rank()
            .then(|| 0.5 * self.singular_values.iter().map(|s| s.ln()).sum::<f64>())
    }

    /// Why the injective (or invertible, if `square`) preconditions fail, if they do.
    pub fn koopman_obstruction(&self, square: bool) -> Option<String> {
        if square && self.rows != self.cols {
            return Some(format!("layer is {}x{}, not square", self.rows, self.cols));
        }
        if self.cols > self.rows {
            return Some(format!(
                "layer is wide ({}x{}) and cannot be injective",
                self.rows, self.cols
            ));
        }
        if self.rank < self.cols {
            return Some(format!(
                "numerical rank {} < {} columns (sigma_min {:e} <= tol {:e})",
                self.rank,
                self.cols,
                self.sigma_min(),
                self.tol
            ));
        }
        None
    }
}

pub fn spectra(net: &NetworkSpec) -> Result<Vec<LayerSpectrum>> {
    net.layers.iter().map(|l| LayerSpectrum::of(&l.weight)).collect()
}

fn check_s(s_prev: f64) -> Result<()> {
    if !(s_prev > 0.0 && s_prev.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothness exponent must be positive, got {s_prev}"
        )));
    }
    Ok(())
}

/// `ln max{1, σ^e}` for `σ ≥ 0`, `e > 0`.
fn log_max1_pow(sigma: f64, e: f64) -> f64 {
    (e * sigma.ln()).max(0.0)
}

/// `max{1, ‖W‖^{2 s_prev}}`, the closed-form sup of `p_j / (p_{j−1} ∘ Wᵀ)` over `R(W)`.
pub fn density_ratio_bound(w: &Matrix, s_prev: f64) -> Result<f64> {
    check_s(s_prev)?;
    Ok(log_max1_pow(operator_norm(w)?, 2.0 * s_prev).exp())
}

/// Sampling descriptor for [`density_ratio_grid_sup`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioGrid {
    /// Radii `‖ω‖` to probe along every direction.
    pub radii: Vec<f64>,
    /// Random unit directions inside `R(W)` added to the left singular vectors.
    pub random_directions: usize,
    pub seed: u64,
}

impl RatioGrid {
    /// `0` plus `points` log-spaced radii from `1e-3` to `1e6`.
    pub fn log_spaced(points: usize, random_directions: usize, seed: u64) -> Self {
        let mut radii = vec![0.0];
        let (lo, hi) = (-3.0f64, 6.0f64);
        for i in 0..points {
            let t = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            radii.push(10f64.powf(lo + t * (hi - lo)));
        }
        Self {
            radii,
            random_directions,
            seed,
        }
    }
}

impl Default for RatioGrid {
    fn default() -> Self {
        Self::log_spaced(400, 16, 0)
    }
}

/// Max over sampled `ω ∈ R(W)` of `(1 + ‖Wᵀω‖²)^{s_prev} / (1 + ‖ω‖²)^{s_cur}`.
pub fn density_ratio_grid_sup(w: &Matrix, s_prev: f64, s_cur: f64, grid: &RatioGrid) -> Result<f64> {
    check_s(s_prev)?;
    if s_cur < s_prev {
        return Err(Error::InvalidParameter(format!(
            "s_cur {s_cur} must be at least s_prev {s_prev}"
        )));
    }
    if grid.radii.is_empty() {
        return Err(Error::InvalidParameter("ratio grid has no radii".to_string()));
    }
    let dec = svd_thin(w)?;
    let tol = rank_tolerance(w, dec.singular_values[0]);
    let basis: Vec<usize> = (0..dec.singular_values.len())
        .filter(|&t| dec.singular_values[t] > tol)
        .collect();
    let mut directions: Vec<Vec<f64>> = basis.iter().map(|&t| dec.u.column(t)).collect();
    if !basis.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
        for _ in 0..grid.random_directions {
            let coef: Vec<f64> = basis.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut v = vec![0.0; w.rows()];
            for (c, &t) in coef.iter().zip(&basis) {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi += c * dec.u.get(i, t);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                directions.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
    }
    // log(1+x) is used throughout so that radius 1e6 and exponents near 3 stay finite
    let mut best = f64::NEG_INFINITY;
    if grid.radii.contains(&0.0) || directions.is_empty() {
        best = 0.0;
    }
    for dir in &directions {
        let wt = w.mat_t_vec(dir);
        let gain_sq = wt.iter().map(|x| x * x).sum::<f64>();
        for &r in &grid.radii {
            let r2 = r * r;
            let v = s_prev * (gain_sq * r2).ln_1p() - s_cur * r2.ln_1p();
            best = best.max(v);
        }
    }
    Ok(best.exp())
}

/// `max{1, ‖W‖^{s_prev}} / det(WᵀW)^{1/4}` for `W` of full column rank.
pub fn koopman_layer_factor(w: &Matrix, s_prev: f64) -> Result<f64> {
    check_s(s_prev)?;
    let sp = LayerSpectrum::of(w)?;
    if sp.cols > sp.rows {
        return Err(Error::Shape(format!(
            "koopman factor needs cols <= rows, got {}x{}",
            sp.rows, sp.cols
        )));
    }
    let ld = sp.log_det_factor().ok_or(Error::RankDeficient {
        sigma_min: sp.sigma_min(),
    })?;
    Ok((log_max1_pow(sp.sigma_max(), s_prev) - ld).exp())
}

/// Log of the matrix-only factor of one layer under a variant, without `G_j` or `‖K_σ‖`.
pub(crate) fn log_matrix_factor(
    variant: Variant,
    sp: &LayerSpectrum,
    s_prev: f64,
    weighted_tol: Option<f64>,
) -> std::result::Result<f64, String> {
    match variant {
        Variant::Invertible | Variant::Injective => {
            if let Some(why) = sp.koopman_obstruction(variant == Variant::Invertible) {
                return Err(why);
            }
            Ok(log_max1_pow(sp.sigma_max(), s_prev) - sp.log_det_factor().expect("full rank"))
        }
        Variant::Graph => {
            // ‖W̃‖ = (1+σ₁²)^{1/2} ≥ 1, so the max with 1 is the power itself;
            // columns beyond min(rows, cols) contribute zero singular values
            let top = 0.5 * s_prev * sp.sigma_max().powi(2).ln_1p();
            let det: f64 = sp.singular_values.iter().map(|s| (s * s).ln_1p()).sum();
            Ok(top - 0.25 * det)
        }
        Variant::Weighted => {
            let tol = weighted_tol.unwrap_or(sp.tol);
            let rd = restricted_det_from_singular_values(&sp.singular_values, tol);
            Ok(log_max1_pow(sp.sigma_max(), s_prev) - 0.5 * rd.log_value)
        }
        other => Err(format!("{} has no Koopman layer factor", other.name())),
    }
}

/// Whether `G_j` multiplies the layer factor of this variant.
fn uses_g(variant: Variant) -> bool {
    !matches!(variant, Variant::Invertible)
}

pub(crate) fn check_constants(net: &NetworkSpec, c: &BoundConstants) -> Result<()> {
    if net.layers.is_empty() {
        return Err(Error::Validation(vec!["network has no layers".to_string()]));
    }
    c.validate(net.depth())
}

/// Per-layer logs of the full layer factor (matrix factor times `G_j ‖K_σ_j‖`).
pub(crate) fn log_layer_factors(
    variant: Variant,
    net: &NetworkSpec,
    sp: &[LayerSpectrum],
    c: &BoundConstants,
    weighted_tol: Option<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(net.depth());
    for (j, s) in sp.iter().enumerate() {
        let layer = j + 1;
        let s_prev = net.s_prev(j);
        if variant == Variant::Injective && net.layers[j].s_out < s_prev {
            return Err(Error::Inapplicable {
                variant: variant.name().to_string(),
                layer,
                reason: format!(
                    "s_{layer} = {} is smaller than s_{} = {s_prev}",
                    net.layers[j].s_out,
                    layer - 1
                ),
            });
        }
        let m = log_matrix_factor(variant, s, s_prev, weighted_tol).map_err(|reason| {
            Error::Inapplicable {
                variant: variant.name().to_string(),
                layer,
                reason,
            }
        })?;
        let g = if uses_g(variant) { c.g_factors[j].ln() } else { 0.0 };
        out.push(m + g + c.sigma_norms[j].ln());
    }
    Ok(out)
}

fn assemble(net: &NetworkSpec, c: &BoundConstants, variant: Variant, tol: Option<f64>) -> Result<f64> {
    check_constants(net, c)?;
    let sp = spectra(net)?;
    let logs = log_layer_factors(variant, net, &sp, c, tol)?;
    Ok((c.prefactor().ln() + logs.iter().sum::<f64>()).exp())
}

/// Bound for square invertible layers: `B‖g‖/√n · Π max{1,‖W_j‖^{s_{j−1}}} ‖K_σ_j‖ / |det W_j|^{1/2}`.
pub fn bound_invertible(net: &NetworkSpec, c: &BoundConstants) -> Result<f64> {
    assemble(net, c, Variant::Invertible, None)
}

/// Bound for injective layers: `B‖g‖/√n · Π max{1,‖W_j‖^{s_{j−1}}} G_j ‖K_σ_j‖ / det(W_jᵀW_j)^{1/4}`.
pub fn bound_injective(net: &NetworkSpec, c: &BoundConstants) -> Result<f64> {
    assemble(net, c, Variant::Injective, None)
}

/// Graph-lift bound, valid for every weight matrix. `c.g_norm` stands in for `‖g̃‖`.
pub fn bound_graph(net: &NetworkSpec, c: &BoundConstants) -> Result<f64> {
    assemble(net, c, Variant::Graph, None)
}

/// Weighted-Koopman bound with restricted determinants under the cutoff `tol`.
pub fn bound_weighted(net: &NetworkSpec, c: &BoundConstants, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "restricted determinant tolerance must be positive, got {tol}"
        )));
    }
    assemble(net, c, Variant::Weighted, Some(tol))
}

/// Largest `l` such that layers `1..=l` satisfy the injective preconditions.
pub(crate) fn largest_koopman_prefix(net: &NetworkSpec, sp: &[LayerSpectrum]) -> (usize, Option<String>) {
    for (j, s) in sp.iter().enumerate() {
        let layer = j + 1;
        if let Some(why) = s.koopman_obstruction(false) {
            return (j, Some(format!("layer {layer}: {why}")));
        }
        if net.layers[j].s_out < net.s_prev(j) {
            return (j, Some(format!("layer {layer}: smoothness decreases")));
        }
    }
    (sp.len(), None)
}

pub(crate) fn log_combined(
    net: &NetworkSpec,
    sp: &[LayerSpectrum],
    c: &BoundConstants,
    l: usize,
) -> Result<f64> {
    let depth = net.depth();
    if l > depth {
        return Err(Error::InvalidParameter(format!(
            "combined split l = {l} exceeds depth {depth}"
        )));
    }
    let (feasible, why) = largest_koopman_prefix(net, sp);
    if l > feasible {
        return Err(Error::Inapplicable {
            variant: Variant::Combined.name().to_string(),
            layer: feasible + 1,
            reason: format!(
                "{}; largest feasible l is {feasible}",
                why.unwrap_or_default()
            ),
        });
    }
    let mut log = c.prefactor().ln() + (depth - l) as f64 * std::f64::consts::LN_2;
    for (j, s) in sp.iter().enumerate() {
        if j < l {
            let m = log_matrix_factor(Variant::Injective, s, net.s_prev(j), None)
                .expect("prefix checked");
            log += m + c.g_factors[j].ln() + c.sigma_norms[j].ln();
        } else {
            log += s.frobenius.ln();
        }
    }
    Ok(log)
}

/// `2^{L−l} Π_{j>l} ‖W_j‖_F · B‖g‖/√n · Π_{j≤l} G_j ‖K_σ_j‖ max{1,‖W_j‖^{s_{j−1}}} / det(W_jᵀW_j)^{1/4}`.
pub fn bound_combined(net: &NetworkSpec, c: &BoundConstants, l: usize) -> Result<f64> {
    check_constants(net, c)?;
    let sp = spectra(net)?;
    Ok(log_combined(net, &sp, c, l)?.exp())
}

/// Minimizer of [`bound_combined`] over every feasible split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedBest {
    pub l_star: usize,
    #[serde(with = "crate::real")]
    pub value: f64,
    /// Value for `l = 0, 1, …, l_max` where `l_max` is the largest feasible split.
    #[serde(with = "crate::real::vec")]
    pub per_l: Vec<f64>,
}

pub(crate) fn combined_best_from(net: &NetworkSpec, sp: &[LayerSpectrum], c: &BoundConstants) -> CombinedBest {
    let (feasible, _) = largest_koopman_prefix(net, sp);
    let logs: Vec<f64> = (0..=feasible)
        .map(|l| log_combined(net, sp, c, l).expect("feasible split"))
        .collect();
    let mut l_star = 0;
    for (l, v) in logs.iter().enumerate() {
        // strict comparison keeps the smallest l on ties
        if *v < logs[l_star] {
            l_star = l;
        }
    }
    let per_l: Vec<f64> = logs.iter().map(|v| v.exp()).collect();
    CombinedBest {
        l_star,
        value: per_l[l_star],
        per_l,
    }
}

pub fn bound_combined_best(net: &NetworkSpec, c: &BoundConstants) -> Result<CombinedBest> {
    check_constants(net, c)?;
    let sp = spectra(net)?;
    Ok(combined_best_from(net, &sp, c))
}

/// Bound for a class of networks with `‖W_j‖ ≤ C` and `|det W_j| ≥ D` (square layers):
/// `B‖g‖/√n · Π ‖K_σ_j‖ max{1, C^{s_{j−1}}} / √D`.
pub fn class_bound_invertible(
    c: &BoundConstants,
    s_prev: &[f64],
    norm_cap: f64,
    det_floor: f64,
) -> Result<f64> {
    if !(norm_cap > 0.0 && det_floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "class constraints need C > 0 and D > 0, got C = {norm_cap}, D = {det_floor}"
        )));
    }
    c.validate(s_prev.len())?;
    let mut log = c.prefactor().ln();
    for (j, &s) in s_prev.iter().enumerate() {
        check_s(s)?;
        log += c.sigma_norms[j].ln() + log_max1_pow(norm_cap, s) - 0.5 * det_floor.ln();
    }
    Ok(log.exp())
}
