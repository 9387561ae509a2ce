//! Dense real linear algebra for weight-matrix analysis.
//!
//! Everything spectral goes through [`svd`]; determinants are always assembled
//! from singular values as sums of logarithms so that deep products neither
//! overflow nor underflow.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative off-diagonal tolerance handed to the bidiagonal QR iteration.
pub const SVD_TOLERANCE: f64 = 1e-12;
/// Iteration cap is `SVD_ITERATION_FACTOR * max(rows, cols)`.
pub const SVD_ITERATION_FACTOR: usize = 100;
/// Relative factor in the default rank tolerance `1e-8 · σ₁ · max(rows, cols)`.
pub const RANK_TOLERANCE_FACTOR: f64 = 1e-8;

const SIGN_EPS: f64 = 1e-12;

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Shape-checked only; intermediate results may overflow.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the entries. Callers are responsible for keeping them finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x`.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mat_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · y`.
    pub fn mat_t_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "mat_t_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Full singular value decomposition `M = U · diag(σ) · Vᵀ`.
///
/// `u` is `rows × rows`, `v` is `cols × cols`; only the first `min(rows, cols)`
/// columns of each pair with a singular value.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// Economy-size decomposition: `u` is `rows × k`, `v` is `cols × k`, `k = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl ThinSvd {
    /// `U · diag(f(σ)) · Vᵀ`, the spectral calculus used by regularizer gradients.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let (r, c, k) = (self.u.rows(), self.v.rows(), self.singular_values.len());
        let mut out = Matrix::zeros(r, c);
        for t in 0..k {
            let w = f(self.singular_values[t]);
            if w == 0.0 {
                continue;
            }
            for i in 0..r {
                let ui = self.u.get(i, t) * w;
                if ui == 0.0 {
                    continue;
                }
                let row = &mut out.data[i * c..(i + 1) * c];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += ui * self.v.get(j, t);
                }
            }
        }
        out
    }

    /// Rank-one matrix `u_t v_tᵀ`.
    pub fn outer(&self, t: usize) -> Matrix {
        let (r, c) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out.data[i * c + j] = self.u.get(i, t) * self.v.get(j, t);
            }
        }
        out
    }
}

fn iteration_cap(m: &Matrix) -> usize {
    SVD_ITERATION_FACTOR * m.rows.max(m.cols)
}

/// Economy SVD with descending singular values and the sign convention that the
/// first non-negligible entry of every left singular vector is positive.
pub fn svd_thin(m: &Matrix) -> Result<ThinSvd> {
    let cap = iteration_cap(m);
    let dec = m
        .to_nalgebra()
        .try_svd(true, true, SVD_TOLERANCE, cap)
        .ok_or(Error::SvdNoConvergence {
            rows: m.rows,
            cols: m.cols,
            iterations: cap,
        })?;
    let (u, v_t) = match (dec.u, dec.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("singular vectors were requested"),
    };
    let k = m.rows.min(m.cols);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        dec.singular_values[b]
            .partial_cmp(&dec.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut uu = Matrix::zeros(m.rows, k);
    let mut vv = Matrix::zeros(m.cols, k);
    let mut sv = Vec::with_capacity(k);
    for (t, &src) in order.iter().enumerate() {
        sv.push(dec.singular_values[src].max(0.0));
        let flip = u
            .column(src)
            .iter()
            .find(|x| x.abs() > SIGN_EPS)
            .is_some_and(|&x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for i in 0..m.rows {
            uu.set(i, t, sign * u[(i, src)]);
        }
        for j in 0..m.cols {
            vv.set(j, t, sign * v_t[(src, j)]);
        }
    }
    Ok(ThinSvd {
        u: uu,
        singular_values: sv,
        v: vv,
    })
}

/// Full SVD; see [`Svd`] for the shapes.
pub fn svd(m: &Matrix) -> Result<Svd> {
    let thin = svd_thin(m)?;
    Ok(Svd {
        u: complete_basis(&thin.u),
        singular_values: thin.singular_values,
        v: complete_basis(&thin.v),
    })
}

/// Singular values only, descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let cap = iteration_cap(m);
    let dec = m
        .to_nalgebra()
        .try_svd(false, false, SVD_TOLERANCE, cap)
        .ok_or(Error::SvdNoConvergence {
            rows: m.rows,
            cols: m.cols,
            iterations: cap,
        })?;
    let mut sv: Vec<f64> = dec.singular_values.iter().map(|s| s.max(0.0)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

/// Extends orthonormal columns to an orthonormal basis of the ambient space,
/// greedily adding the standard basis vector with the largest residual.
fn complete_basis(q: &Matrix) -> Matrix {
    let (n, k) = q.shape();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| q.column(j)).collect();
    while cols.len() < n {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut r = vec![0.0; n];
            r[e] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let dot: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
                    for (ri, ci) in r.iter_mut().zip(c) {
                        *ri -= dot * ci;
                    }
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, r));
            }
        }
        let (norm, mut r) = best.expect("ambient dimension is positive");
        r.iter_mut().for_each(|x| *x /= norm);
        if r.iter().find(|x| x.abs() > SIGN_EPS).is_some_and(|&x| x < 0.0) {
            r.iter_mut().for_each(|x| *x = -*x);
        }
        cols.push(r);
    }
    let mut out = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            out.set(i, j, x);
        }
    }
    out
}

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

/// `‖M‖_{p,q} = ( Σ_cols ( Σ_rows |m_ij|^p )^{q/p} )^{1/q}`; `p` or `q` may be `f64::INFINITY`.
pub fn pq_norm(m: &Matrix, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "(p, q) norm requires p, q >= 1, got ({p}, {q})"
        )));
    }
    let col_norms: Vec<f64> = (0..m.cols)
        .map(|j| vector_p_norm((0..m.rows).map(|i| m.get(i, j)), p))
        .collect();
    Ok(vector_p_norm(col_norms.into_iter(), q))
}

fn vector_p_norm(xs: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        xs.fold(0.0, |acc, x| acc.max(x.abs()))
    } else if p == 1.0 {
        xs.map(f64::abs).sum()
    } else if p == 2.0 {
        xs.map(|x| x * x).sum::<f64>().sqrt()
    } else {
        xs.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Default numerical-rank cutoff `1e-8 · σ₁ · max(rows, cols)`.
pub fn rank_tolerance(m: &Matrix, sigma_max: f64) -> f64 {
    RANK_TOLERANCE_FACTOR * sigma_max * m.rows.max(m.cols) as f64
}

/// Numerical rank under [`rank_tolerance`].
pub fn numerical_rank(m: &Matrix) -> Result<usize> {
    let sv = singular_values(m)?;
    let tol = rank_tolerance(m, sv[0]);
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// `log det(MᵀM) = 2 Σ log σ_i` for a matrix of full column rank.
pub fn gram_logdet(m: &Matrix) -> Result<f64> {
    if m.cols > m.rows {
        return Err(Error::Shape(format!(
            "gram determinant needs cols <= rows, got {}x{}",
            m.rows, m.cols
        )));
    }
    gram_logdet_from_singular_values(m, &singular_values(m)?)
}

pub(crate) fn gram_logdet_from_singular_values(m: &Matrix, sv: &[f64]) -> Result<f64> {
    let sigma_min = *sv.last().expect("non-empty spectrum");
    if sigma_min <= rank_tolerance(m, sv[0]) {
        return Err(Error::RankDeficient { sigma_min });
    }
    Ok(2.0 * sv.iter().map(|s| s.ln()).sum::<f64>())
}

/// Determinant of `M` restricted to `ker(M)^⊥`: product of singular values above `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedDet {
    pub value: f64,
    pub log_value: f64,
    pub rank: usize,
}

pub fn restricted_det(m: &Matrix, tol: f64) -> Result<RestrictedDet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "restricted determinant tolerance must be positive, got {tol}"
        )));
    }
    Ok(restricted_det_from_singular_values(&singular_values(m)?, tol))
}

pub(crate) fn restricted_det_from_singular_values(sv: &[f64], tol: f64) -> RestrictedDet {
    let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > tol).collect();
    let log_value: f64 = kept.iter().map(|s| s.ln()).sum();
    RestrictedDet {
        value: log_value.exp(),
        log_value,
        rank: kept.len(),
    }
}

/// `σ₁ / σ_min` over the `min(rows, cols)` singular values; `+∞` when `σ_min = 0`.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    Ok(condition_from_singular_values(&singular_values(m)?))
}

pub(crate) fn condition_from_singular_values(sv: &[f64]) -> f64 {
    let smax = sv[0];
    let smin = *sv.last().expect("non-empty spectrum");
    if smin <= 0.0 {
        return f64::INFINITY;
    }
    let r = smax / smin;
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
    pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Matrix {
        let g = gaussian(n, n, rng);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..n {
            let mut c = g.column(j);
            for _ in 0..2 {
                for q in &cols {
                    let d: f64 = q.iter().zip(&c).map(|(a, b)| a * b).sum();
                    c.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
                }
            }
            let nrm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= nrm);
            cols.push(c);
        }
        let mut m = Matrix::zeros(n, n);
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    /// Determinant by cofactor expansion along the first row.
    pub fn cofactor_det(m: &Matrix) -> f64 {
        let n = m.rows();
        assert_eq!(n, m.cols());
        if n == 1 {
            return m.get(0, 0);
        }
        let mut det = 0.0;
        for j in 0..n {
            let minor: Vec<f64> = (1..n)
                .flat_map(|i| (0..n).filter(move |&c| c != j).map(move |c| (i, c)))
                .map(|(i, c)| m.get(i, c))
                .collect();
            let minor = Matrix::new(n - 1, n - 1, minor).unwrap();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m.get(0, j) * cofactor_det(&minor);
        }
        det
    }

    /// Eigenvalues of a small symmetric PSD matrix from its characteristic
    /// polynomial (Faddeev–LeVerrier coefficients, Newton from above with deflation).
    pub fn charpoly_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        // coefficients of λ^n + c1 λ^{n-1} + ... + cn
        let mut coeffs = vec![1.0];
        let mut mk = Matrix::zeros(n, n);
        for k in 1..=n {
            let prev_c = *coeffs.last().unwrap();
            let shifted = mk.add(&Matrix::identity(n).scale(prev_c)).unwrap();
            mk = a.matmul(&shifted).unwrap();
            let tr: f64 = (0..n).map(|i| mk.get(i, i)).sum();
            coeffs.push(-tr / k as f64);
        }
        let mut poly = coeffs;
        let mut roots = Vec::new();
        let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
        let mut x = trace.abs() + 1.0;
        while poly.len() > 1 {
            for _ in 0..500 {
                let (p, dp) = horner(&poly, x);
                if dp == 0.0 {
                    break;
                }
                let step = p / dp;
                x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1e-300) {
                    break;
                }
            }
            roots.push(x);
            // synthetic division by (λ - x)
            let mut q = Vec::with_capacity(poly.len() - 1);
            let mut acc = 0.0;
            for &c in &poly[..poly.len() - 1] {
                acc = acc * x + c;
                q.push(acc);
            }
            poly = q;
        }
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        roots
    }

    fn horner(poly: &[f64], x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in poly {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    fn check_svd_invariants(m: &Matrix) {
        let s = svd(m).unwrap();
        let k = m.rows().min(m.cols());
        assert_eq!(s.singular_values.len(), k);
        for w in s.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(s.singular_values.iter().all(|&x| x >= 0.0));
        let mut sigma = Matrix::zeros(m.rows(), m.cols());
        for (i, &x) in s.singular_values.iter().enumerate() {
            sigma.set(i, i, x);
        }
        let recon = s.u.matmul(&sigma).unwrap().matmul(&s.v.transpose()).unwrap();
        let err = recon.sub(m).unwrap().frobenius_norm();
        assert!(err <= 1e-10 * m.frobenius_norm().max(1.0), "reconstruction {err}");
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        let vtv = s.v.transpose().matmul(&s.v).unwrap();
        assert!(utu.max_abs_diff(&Matrix::identity(m.rows())) < 1e-10);
        assert!(vtv.max_abs_diff(&Matrix::identity(m.cols())) < 1e-10);
    }

    #[test]
    fn svd_identity_and_diagonal() {
        assert_eq!(svd(&Matrix::identity(3)).unwrap().singular_values, vec![1.0; 3]);
        let s = svd(&Matrix::from_diag(&[2.0, 0.5])).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-15);
        assert!((s.singular_values[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn svd_matches_characteristic_polynomial() {
        let mut r = rng(11);
        for _ in 0..20 {
            let m = gaussian(4, 3, &mut r);
            let gram = m.transpose().matmul(&m).unwrap();
            let eig = charpoly_eigenvalues(&gram);
            let sv = svd(&m).unwrap().singular_values;
            for (s, l) in sv.iter().zip(&eig) {
                assert!((s - l.max(0.0).sqrt()).abs() < 1e-8, "{s} vs {}", l.sqrt());
            }
        }
    }

    #[test]
    fn svd_sign_convention() {
        let mut r = rng(3);
        let m = gaussian(5, 4, &mut r);
        let s = svd(&m).unwrap();
        for j in 0..5 {
            let first = s.u.column(j).into_iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
        assert_eq!(s, svd(&m).unwrap());
    }

    #[test]
    fn svd_handles_wide_zero_and_vector_shapes() {
        let mut r = rng(5);
        check_svd_invariants(&gaussian(2, 7, &mut r));
        check_svd_invariants(&gaussian(1, 4, &mut r));
        check_svd_invariants(&gaussian(6, 1, &mut r));
        let z = Matrix::zeros(3, 2);
        let s = svd(&z).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        check_svd_invariants(&z);
    }

    #[test]
    fn operator_norm_cases() {
        assert_eq!(operator_norm(&Matrix::identity(5)).unwrap(), 1.0);
        assert!((operator_norm(&Matrix::from_diag(&[2.0, 0.5])).unwrap() - 2.0).abs() < 1e-15);
        // power iteration on MᵀM
        let mut r = rng(7);
        for _ in 0..10 {
            let m = gaussian(3, 3, &mut r);
            let gram = m.transpose().matmul(&m).unwrap();
            let mut x = vec![1.0, 0.5, -0.25];
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let y = gram.mat_vec(&x);
                let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                lambda = nrm;
                x = y.into_iter().map(|v| v / nrm).collect();
            }
            assert!((operator_norm(&m).unwrap() - lambda.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn pq_norm_cases() {
        let d = 5;
        let i = Matrix::identity(d);
        assert!((pq_norm(&i, 2.0, 2.0).unwrap() - (d as f64).sqrt()).abs() < 1e-15);
        assert!((pq_norm(&i, 2.0, 1.0).unwrap() - d as f64).abs() < 1e-15);
        let mut r = rng(8);
        let m = gaussian(3, 3, &mut r);
        let mut direct = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                direct += m.get(a, b).abs();
            }
        }
        assert!((pq_norm(&m, 1.0, 1.0).unwrap() - direct).abs() < 1e-12);
        assert!((pq_norm(&m, 2.0, 2.0).unwrap() - m.frobenius_norm()).abs() < 1e-12);
        assert!(matches!(pq_norm(&m, 0.5, 2.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(pq_norm(&m, 2.0, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn gram_logdet_cases() {
        let mut r = rng(9);
        let q = orthogonal(4, &mut r);
        assert!(gram_logdet(&q).unwrap().abs() < 1e-12);
        assert!(gram_logdet(&Matrix::from_diag(&[2.0, 0.5])).unwrap().abs() < 1e-14);
        for _ in 0..20 {
            let m = gaussian(4, 4, &mut r);
            let gram = m.transpose().matmul(&m).unwrap();
            let expect = cofactor_det(&gram).ln();
            assert!((gram_logdet(&m).unwrap() - expect).abs() < 1e-8);
        }
        assert!(matches!(
            gram_logdet(&Matrix::from_diag(&[3.0, 0.0])),
            Err(Error::RankDeficient { .. })
        ));
        assert!(matches!(gram_logdet(&gaussian(2, 3, &mut r)), Err(Error::Shape(_))));
    }

    #[test]
    fn restricted_det_cases() {
        let d = restricted_det(&Matrix::from_diag(&[3.0, 0.0]), 1e-8).unwrap();
        assert!((d.value - 3.0).abs() < 1e-14);
        assert_eq!(d.rank, 1);
        let z = restricted_det(&Matrix::zeros(3, 3), 1e-8).unwrap();
        assert_eq!((z.value, z.rank), (1.0, 0));
        let q = orthogonal(5, &mut rng(1));
        let o = restricted_det(&q, 1e-8).unwrap();
        assert!((o.value - 1.0).abs() < 1e-12);
        assert_eq!(o.rank, 5);
    }

    #[test]
    fn condition_number_cases() {
        let q = orthogonal(4, &mut rng(2));
        assert!((condition_number(&q).unwrap() - 1.0).abs() < 1e-12);
        assert!((condition_number(&Matrix::from_diag(&[2.0, 1.0])).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(
            condition_number(&Matrix::from_diag(&[3.0, 0.0])).unwrap(),
            f64::INFINITY
        );
        let mut r = rng(4);
        for _ in 0..10 {
            let m = gaussian(3, 3, &mut r);
            let eig = charpoly_eigenvalues(&m.transpose().matmul(&m).unwrap());
            let expect = (eig[0] / eig[2]).sqrt();
            let got = condition_number(&m).unwrap();
            assert!((got - expect).abs() < 1e-8 * expect.max(1.0), "{got} vs {expect}");
        }
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
    }

    fn arb_matrix(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |d| Matrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn prop_svd_invariants(m in arb_matrix(16)) {
            check_svd_invariants(&m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn prop_gram_logdet_left_orthogonal_invariance(seed in any::<u64>(), n in 1usize..7, extra in 0usize..3) {
            let mut r = rng(seed);
            let m = gaussian(n + extra, n, &mut r);
            let q = orthogonal(n + extra, &mut r);
            let a = gram_logdet(&m).unwrap();
            let b = gram_logdet(&q.matmul(&m).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn prop_operator_norm_submultiplicative(a in arb_matrix(6), seed in any::<u64>(), c in 1usize..6) {
            let b = gaussian(a.cols(), c, &mut rng(seed));
            let ab = a.matmul(&b).unwrap();
            prop_assert!(operator_norm(&ab).unwrap() <= operator_norm(&a).unwrap() * operator_norm(&b).unwrap() + 1e-12 * (1.0 + operator_norm(&ab).unwrap()));
        }

        #[test]
        fn prop_condition_number_scale_invariant(seed in any::<u64>(), n in 1usize..7, c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
            let m = gaussian(n, n, &mut rng(seed));
            let k1 = condition_number(&m).unwrap();
            let k2 = condition_number(&m.scale(c)).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-10 * k1.max(1.0));
        }
    }
}
