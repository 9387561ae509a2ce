//! Special functions and quadrature.

use std::f64::consts::PI;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `ln` of the surface area of the unit sphere in `R^d`, `2 π^{d/2} / Γ(d/2)`.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// Exponentially scaled modified Bessel function of the second kind, `e^x K_ν(x)`,
/// for `x > 0`, from `K_ν(x) = ∫_0^∞ e^{-x cosh t} cosh(νt) dt` by the trapezoid rule.
///
/// The integrand is entire and decays doubly exponentially, so the trapezoid rule
/// with step `h` has error of order `exp(-π²/(2h))`.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k_scaled needs x > 0");
    let nu = nu.abs();
    const H: f64 = 0.02;
    // the integrand exp(-x (cosh t - 1)) cosh(νt) peaks near t* = asinh(ν / x)
    let t_peak = (nu / x).asinh();
    let f = |t: f64| {
        let e = -x * (t.cosh() - 1.0);
        // cosh(νt) e^{e} evaluated without overflow
        0.5 * ((e + nu * t).exp() + (e - nu * t).exp())
    };
    let mut sum = 0.5 * f(0.0);
    let mut k = 1usize;
    loop {
        let t = k as f64 * H;
        let v = f(t);
        sum += v;
        if t > t_peak && v <= 1e-18 * sum {
            break;
        }
        k += 1;
        if k > 200_000 {
            break;
        }
    }
    sum * H
}

/// `ln(r^ν K_ν(r))` for `r > 0`.
pub fn ln_r_pow_bessel_k(nu: f64, r: f64) -> f64 {
    nu * r.ln() - r + bessel_k_scaled(nu, r).ln()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]`.
///
/// Globally adaptive: the subinterval with the largest error estimate is bisected
/// until the summed estimate drops below `rel_tol · ∫|f|` or the interval budget
/// is exhausted.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 5000;
    let (v0, e0) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v0, e0)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let abs_scale: f64 = parts.iter().map(|p| p.2.abs()).sum();
        if err <= rel_tol * abs_scale || parts.len() >= MAX_INTERVALS || err == 0.0 {
            return value;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return value;
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        parts.push((lo, mid, vl, el));
        parts.push((mid, hi, vr, er));
    }
}

/// `∫_0^∞ f(ρ) dρ` via the map `ρ = t / (1 - t)`.
pub fn integrate_half_line(f: impl Fn(f64) -> f64, rel_tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - t;
            let rho = t / one_minus;
            let v = f(rho) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// Pearson correlation coefficient; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_half_integer_closed_forms() {
        for &x in &[1e-4, 0.01, 0.3, 1.0, 2.5, 10.0, 50.0, 300.0] {
            // e^x K_{1/2}(x) = sqrt(π/(2x))
            let k_half = (PI / (2.0 * x)).sqrt();
            assert!((bessel_k_scaled(0.5, x) / k_half - 1.0).abs() < 1e-12, "x = {x}");
            let k_three_half = k_half * (1.0 + 1.0 / x);
            assert!((bessel_k_scaled(1.5, x) / k_three_half - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_small_argument_limit() {
        // r^ν K_ν(r) → 2^{ν-1} Γ(ν) as r → 0
        for &nu in &[0.5, 1.3, 3.0] {
            let lim = (nu - 1.0) * std::f64::consts::LN_2 + ln_gamma(nu);
            let v = ln_r_pow_bessel_k(nu, 1e-9);
            assert!((v - lim).abs() < 1e-6, "ν = {nu}: {v} vs {lim}");
        }
    }

    #[test]
    fn gauss_kronrod_polynomials_and_gaussian() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let g = integrate_half_line(|x| (-x * x).exp(), 1e-12);
        assert!((g - PI.sqrt() / 2.0).abs() < 1e-12);
        let c = integrate_half_line(|x| 1.0 / (1.0 + x * x), 1e-12);
        assert!((c - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn pearson_basic() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_none());
    }
}
