//! Norm-based competitors. None of them uses `B`, `‖g‖`, or the activations;
//! each is a function of the weights and `n` only.

use super::koopman::{spectra, LayerSpectrum};
use super::Variant;
use crate::error::{Error, Result};
use crate::matcore::{pq_norm, Matrix};
use crate::network::NetworkSpec;

fn check(net: &NetworkSpec, n: usize) -> Result<()> {
    if net.layers.is_empty() {
        return Err(Error::Validation(vec!["network has no layers".to_string()]));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample count n must be positive".to_string()));
    }
    Ok(())
}

/// Options shared by the competitor bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompetitorOptions {
    /// Reference matrices `A_j` for the spectrally normalized bound; zero when absent.
    pub references: Option<Vec<Matrix>>,
}

/// Per-layer factors and the total of one competitor, in log space.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Competitor {
    pub log_layer: Vec<f64>,
    pub log_total: f64,
}

pub(crate) fn neyshabur15_from(sp: &[LayerSpectrum], n: usize) -> Competitor {
    let log_layer: Vec<f64> = sp
        .iter()
        .map(|s| std::f64::consts::LN_2 + s.frobenius.ln())
        .collect();
    let log_total = log_layer.iter().sum::<f64>() - 0.5 * (n as f64).ln();
    Competitor { log_layer, log_total }
}

pub(crate) fn neyshabur18_from(net: &NetworkSpec, sp: &[LayerSpectrum], n: usize) -> Result<Competitor> {
    let mut ratio = 0.0;
    for (j, s) in sp.iter().enumerate() {
        if !(s.sigma_max() > 0.0) {
            return Err(Error::Inapplicable {
                variant: Variant::Neyshabur18.name().to_string(),
                layer: j + 1,
                reason: "zero operator norm in the stable-rank denominator".to_string(),
            });
        }
        ratio += (s.frobenius / s.sigma_max()).powi(2);
    }
    let depth = sp.len() as f64;
    let width = net.layers.iter().map(|l| l.out_dim()).max().unwrap_or(0) as f64;
    let log_layer: Vec<f64> = sp.iter().map(|s| s.sigma_max().ln()).collect();
    let log_total = depth.ln() + width.ln() + log_layer.iter().sum::<f64>() + 0.5 * ratio.ln()
        - 0.5 * (n as f64).ln();
    Ok(Competitor { log_layer, log_total })
}

pub(crate) fn golowich18_from(sp: &[LayerSpectrum], n: usize) -> Competitor {
    let log_layer: Vec<f64> = sp.iter().map(|s| s.frobenius.ln()).collect();
    let nf = n as f64;
    let rate = nf.powf(-0.25).min((sp.len() as f64 / nf).sqrt());
    let log_total = log_layer.iter().sum::<f64>() + rate.ln();
    Competitor { log_layer, log_total }
}

pub(crate) fn bartlett17_from(
    net: &NetworkSpec,
    sp: &[LayerSpectrum],
    n: usize,
    opts: &CompetitorOptions,
) -> Result<Competitor> {
    if let Some(refs) = &opts.references {
        if refs.len() != net.depth() {
            return Err(Error::InvalidParameter(format!(
                "{} reference matrices for {} layers",
                refs.len(),
                net.depth()
            )));
        }
    }
    let mut inner = 0.0;
    for (j, (layer, s)) in net.layers.iter().zip(sp).enumerate() {
        let wt = layer.weight.transpose();
        let diff = match &opts.references {
            Some(refs) => {
                let a = &refs[j];
                if a.shape() != layer.weight.shape() {
                    return Err(Error::Shape(format!(
                        "reference {} is {:?}, weight is {:?}",
                        j + 1,
                        a.shape(),
                        layer.weight.shape()
                    )));
                }
                wt.sub(&a.transpose())?
            }
            None => wt,
        };
        let num = pq_norm(&diff, 2.0, 1.0)?;
        if num == 0.0 {
            continue;
        }
        if !(s.sigma_max() > 0.0) {
            return Err(Error::Inapplicable {
                variant: Variant::Bartlett17.name().to_string(),
                layer: j + 1,
                reason: "zero operator norm in the discrepancy denominator".to_string(),
            });
        }
        inner += (num / s.sigma_max()).powf(2.0 / 3.0);
    }
    let log_layer: Vec<f64> = sp.iter().map(|s| s.sigma_max().ln()).collect();
    let log_total = if inner == 0.0 {
        f64::NEG_INFINITY
    } else {
        log_layer.iter().sum::<f64>() + 1.5 * inner.ln() - 0.5 * (n as f64).ln()
    };
    Ok(Competitor { log_layer, log_total })
}

/// `2^L Π ‖W_j‖_F / √n`.
pub fn bound_neyshabur15(net: &NetworkSpec, n: usize) -> Result<f64> {
    check(net, n)?;
    Ok(neyshabur15_from(&spectra(net)?, n).log_total.exp())
}

/// `L · max_j d_j · Π ‖W_j‖ · (Σ ‖W_j‖_F² / ‖W_j‖²)^{1/2} / √n`, with `d_j` over the layer outputs.
pub fn bound_neyshabur18(net: &NetworkSpec, n: usize) -> Result<f64> {
    check(net, n)?;
    Ok(neyshabur18_from(net, &spectra(net)?, n)?.log_total.exp())
}

/// `Π ‖W_j‖_F · min{n^{−1/4}, √(L/n)}`.
pub fn bound_golowich18(net: &NetworkSpec, n: usize) -> Result<f64> {
    check(net, n)?;
    Ok(golowich18_from(&spectra(net)?, n).log_total.exp())
}

/// `Π ‖W_j‖ / √n · (Σ ‖W_jᵀ − A_jᵀ‖_{2,1}^{2/3} / ‖W_j‖^{2/3})^{3/2}`.
pub fn bound_bartlett17(net: &NetworkSpec, n: usize, opts: &CompetitorOptions) -> Result<f64> {
    check(net, n)?;
    Ok(bartlett17_from(net, &spectra(net)?, n, opts)?.log_total.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::{gaussian, orthogonal, rng};
    use crate::network::{ActivationKind, Head, LayerSpec};

    fn net_of(weights: Vec<Matrix>) -> NetworkSpec {
        let input_dim = weights[0].cols();
        let layers = weights
            .into_iter()
            .map(|w| {
                let r = w.rows();
                LayerSpec::new(w, vec![0.0; r], ActivationKind::identity(), r as f64 / 2.0 + 0.05)
            })
            .collect();
        NetworkSpec {
            input_dim,
            s_in: input_dim as f64 / 2.0 + 0.05,
            layers,
            head: Head::gaussian(1.0),
        }
    }

    #[test]
    fn neyshabur15_identity() {
        for d in 1..6 {
            let v = bound_neyshabur15(&net_of(vec![Matrix::identity(d)]), 100).unwrap();
            assert!((v - 2.0 * (d as f64).sqrt() / 10.0).abs() < 1e-14);
        }
    }

    #[test]
    fn golowich18_identity_pair() {
        let net = net_of(vec![Matrix::identity(2), Matrix::identity(2)]);
        let v = bound_golowich18(&net, 4).unwrap();
        let expect = 2.0 * 4f64.powf(-0.25).min((2.0f64 / 4.0).sqrt());
        assert!((v - expect).abs() < 1e-14);
        assert!((v - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bartlett17_zero_discrepancy() {
        let mut r = rng(1);
        let ws = vec![gaussian(3, 2, &mut r), gaussian(4, 3, &mut r)];
        let net = net_of(ws.clone());
        let opts = CompetitorOptions {
            references: Some(ws),
        };
        assert_eq!(bound_bartlett17(&net, 10, &opts).unwrap(), 0.0);
    }

    #[test]
    fn bartlett17_direct_evaluation() {
        let mut r = rng(2);
        let ws = vec![gaussian(3, 2, &mut r), gaussian(4, 3, &mut r)];
        let net = net_of(ws.clone());
        let mut prod = 1.0;
        let mut inner = 0.0;
        for w in &ws {
            let op = crate::matcore::operator_norm(w).unwrap();
            prod *= op;
            // ‖Wᵀ‖_{2,1}: sum over columns of Wᵀ (rows of W) of Euclidean norms
            let l21: f64 = (0..w.rows())
                .map(|i| w.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
                .sum();
            inner += (l21 / op).powf(2.0 / 3.0);
        }
        let expect = prod / 10.0 * inner.powf(1.5);
        let got = bound_bartlett17(&net, 100, &CompetitorOptions::default()).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn neyshabur18_direct_evaluation_and_zero_layer() {
        let mut r = rng(3);
        let ws = vec![gaussian(5, 3, &mut r), orthogonal(5, &mut r)];
        let net = net_of(ws.clone());
        let ops: Vec<f64> = ws.iter().map(|w| crate::matcore::operator_norm(w).unwrap()).collect();
        let ratio: f64 = ws
            .iter()
            .zip(&ops)
            .map(|(w, op)| w.frobenius_norm().powi(2) / (op * op))
            .sum();
        let expect = 2.0 * 5.0 * ops[0] * ops[1] * ratio.sqrt() / 3.0;
        let got = bound_neyshabur18(&net, 9).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
        let zero = net_of(vec![Matrix::zeros(2, 2)]);
        assert!(matches!(bound_neyshabur18(&zero, 9), Err(Error::Inapplicable { .. })));
    }

    #[test]
    fn neyshabur15_homogeneous_of_degree_depth() {
        let mut r = rng(4);
        let ws = vec![gaussian(3, 3, &mut r), gaussian(3, 3, &mut r), gaussian(2, 3, &mut r)];
        let base = bound_neyshabur15(&net_of(ws.clone()), 10).unwrap();
        let scaled = bound_neyshabur15(&net_of(ws.iter().map(|w| w.scale(1.7)).collect()), 10).unwrap();
        assert!((scaled / base - 1.7f64.powi(3)).abs() < 1e-12);
    }
}
