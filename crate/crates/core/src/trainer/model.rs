//! Forward pass, losses, and analytic backpropagation on a batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::network::{Head, NetworkSpec};

/// Network output for one input.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Scalar(f64),
    Probabilities(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLoss {
    /// `|f(x) − y|²` with a scalar head.
    Squared,
    /// `−ln p_y` with a softmax head.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Values(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Rows `idx` of `m`.
pub fn select_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::new(idx.len(), m.cols(), data).expect("rows of a valid matrix")
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &NetworkSpec) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Matrix::zeros(l.out_dim(), l.in_dim())).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

/// Pre-activations, activations, and activation derivatives of a batch.
pub(crate) struct Trace {
    /// `post[0]` is the input batch, `post[j]` the output of layer `j`.
    pub post: Vec<Matrix>,
    pub deriv: Vec<Matrix>,
}

/// `X Wᵀ + 1 bᵀ` for a row-major batch `X`.
fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let (n, d_out, d_in) = (x.rows(), w.rows(), w.cols());
    let mut out = vec![0.0; n * d_out];
    for i in 0..n {
        let xi = x.row(i);
        let oi = &mut out[i * d_out..(i + 1) * d_out];
        for k in 0..d_out {
            let wk = w.row(k);
            let mut acc = b[k];
            for m in 0..d_in {
                acc += wk[m] * xi[m];
            }
            oi[k] = acc;
        }
    }
    Matrix::from_raw(n, d_out, out)
}

pub(crate) fn forward_trace(net: &NetworkSpec, x: &Matrix) -> Result<Trace> {
    if x.cols() != net.input_dim {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.cols(),
            net.input_dim
        )));
    }
    let mut post = vec![x.clone()];
    let mut deriv = Vec::with_capacity(net.depth());
    for (j, layer) in net.layers.iter().enumerate() {
        let prev = &post[j];
        if layer.in_dim() != prev.cols() || layer.bias.len() != layer.out_dim() {
            return Err(Error::Shape(format!(
                "layer {} expects {} inputs, receives {}",
                j + 1,
                layer.in_dim(),
                prev.cols()
            )));
        }
        let mut z = affine(prev, &layer.weight, &layer.bias);
        let mut dz = Matrix::zeros(z.rows(), z.cols());
        for (v, d) in z.as_mut_slice().iter_mut().zip(dz.as_mut_slice()) {
            let (a, da) = layer.activation.eval(*v)?;
            *v = a;
            *d = da;
        }
        deriv.push(dz);
        post.push(z);
    }
    Ok(Trace { post, deriv })
}

fn softmax(z: &[f64]) -> (Vec<f64>, f64) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let lse = m + s.ln();
    (e.into_iter().map(|v| v / s).collect(), lse)
}

fn head_output(head: &Head, z: &[f64]) -> Result<Output> {
    match head {
        Head::Gaussian { c } => Ok(Output::Scalar((-c * z.iter().map(|v| v * v).sum::<f64>()).exp())),
        Head::Softmax {} => Ok(Output::Probabilities(softmax(z).0)),
        Head::Custom { .. } => Err(Error::InvalidInput(
            "a custom head is known only through its norm and cannot be evaluated".to_string(),
        )),
    }
}

/// `f(x)` for a single input.
pub fn forward(net: &NetworkSpec, x: &[f64]) -> Result<Output> {
    let xm = Matrix::new(1, x.len(), x.to_vec())?;
    let t = forward_trace(net, &xm)?;
    head_output(&net.head, t.post.last().expect("input row").row(0))
}

/// Outputs for every row of `x`.
pub fn forward_batch(net: &NetworkSpec, x: &Matrix) -> Result<Vec<Output>> {
    let t = forward_trace(net, x)?;
    let last = t.post.last().expect("input row");
    (0..last.rows()).map(|i| head_output(&net.head, last.row(i))).collect()
}

/// Per-sample losses under `loss`.
pub fn sample_losses(net: &NetworkSpec, x: &Matrix, y: &Targets, loss: HeadLoss) -> Result<Vec<f64>> {
    let t = forward_trace(net, x)?;
    let last = t.post.last().expect("input row");
    (0..last.rows())
        .map(|i| sample_loss(&net.head, last.row(i), y, i, loss).map(|(l, _)| l))
        .collect()
}

/// Mean loss over the rows of `x`.
pub fn mean_loss(net: &NetworkSpec, x: &Matrix, y: &Targets, loss: HeadLoss) -> Result<f64> {
    let ls = sample_losses(net, x, y, loss)?;
    Ok(ls.iter().sum::<f64>() / ls.len() as f64)
}

/// Fraction of rows whose arg-max class matches the label.
pub fn accuracy(net: &NetworkSpec, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let t = forward_trace(net, x)?;
    let last = t.post.last().expect("input row");
    let mut hits = 0usize;
    for (i, &lab) in labels.iter().enumerate() {
        let row = last.row(i);
        let arg = (0..row.len())
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty output");
        hits += usize::from(arg == lab);
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Loss of one sample and its gradient with respect to the final layer output.
fn sample_loss(head: &Head, z: &[f64], y: &Targets, i: usize, loss: HeadLoss) -> Result<(f64, Vec<f64>)> {
    match (loss, head, y) {
        (HeadLoss::Squared, Head::Gaussian { c }, Targets::Values(v)) => {
            let f = (-c * z.iter().map(|a| a * a).sum::<f64>()).exp();
            let r = f - v[i];
            // d f / d z = −2 c f z
            let g = z.iter().map(|a| 2.0 * r * (-2.0 * c * f * a)).collect();
            Ok((r * r, g))
        }
        (HeadLoss::CrossEntropy, Head::Softmax {}, Targets::Classes(cl)) => {
            let k = cl[i];
            if k >= z.len() {
                return Err(Error::InvalidInput(format!(
                    "class label {k} out of range for {} outputs",
                    z.len()
                )));
            }
            let (mut p, lse) = softmax(z);
            let l = lse - z[k];
            p[k] -= 1.0;
            Ok((l, p))
        }
        _ => Err(Error::InvalidInput(format!(
            "loss {loss:?} does not match the head {head:?} and target kind"
        ))),
    }
}

fn ensure_finite(xs: &[f64], layer: usize, what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer,
            what: what.to_string(),
        })
    }
}

/// Mean loss over the batch and its gradients with respect to every weight and bias.
pub fn loss_and_grads(net: &NetworkSpec, x: &Matrix, y: &Targets, loss: HeadLoss) -> Result<(f64, Grads)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".to_string()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{n} inputs but {} targets", y.len())));
    }
    let t = forward_trace(net, x)?;
    let depth = net.depth();
    let last = &t.post[depth];
    let d_out = last.cols();
    let mut total = 0.0;
    let mut upstream = vec![0.0; n * d_out];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let (l, g) = sample_loss(&net.head, last.row(i), y, i, loss)?;
        total += l;
        for (u, gv) in upstream[i * d_out..(i + 1) * d_out].iter_mut().zip(g) {
            *u = gv * inv_n;
        }
    }
    let value = total * inv_n;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            layer: depth,
            what: "loss".to_string(),
        });
    }
    let mut grads = Grads::zeros_like(net);
    for j in (0..depth).rev() {
        let w = &net.layers[j].weight;
        let (d_j, d_prev) = (w.rows(), w.cols());
        // δ = upstream ⊙ σ′(z)
        let delta: Vec<f64> = upstream
            .iter()
            .zip(t.deriv[j].as_slice())
            .map(|(u, d)| u * d)
            .collect();
        let a_prev = &t.post[j];
        let gw = grads.weights[j].as_mut_slice();
        let gb = &mut grads.biases[j];
        for i in 0..n {
            let di = &delta[i * d_j..(i + 1) * d_j];
            let ai = a_prev.row(i);
            for k in 0..d_j {
                let dk = di[k];
                if dk == 0.0 {
                    continue;
                }
                gb[k] += dk;
                let row = &mut gw[k * d_prev..(k + 1) * d_prev];
                for m in 0..d_prev {
                    row[m] += dk * ai[m];
                }
            }
        }
        ensure_finite(gw, j + 1, "weight gradient")?;
        ensure_finite(gb, j + 1, "bias gradient")?;
        if j > 0 {
            let mut next = vec![0.0; n * d_prev];
            for i in 0..n {
                let di = &delta[i * d_j..(i + 1) * d_j];
                let ni = &mut next[i * d_prev..(i + 1) * d_prev];
                for k in 0..d_j {
                    let dk = di[k];
                    if dk == 0.0 {
                        continue;
                    }
                    let wk = w.row(k);
                    for m in 0..d_prev {
                        ni[m] += dk * wk[m];
                    }
                }
            }
            upstream = next;
        }
    }
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::{gaussian, rng};
    use crate::network::{smooth_leaky_relu, ActivationKind, LayerSpec};
    use rand::Rng;

    /// erf from its Maclaurin series, summed to convergence.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-20 {
            k += 1.0;
            term *= -x * x / k;
            sum += term / (2.0 * k + 1.0);
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn smooth_leaky_relu_examples() {
        assert_eq!(smooth_leaky_relu(0.0, 0.5, 0.5), 0.0);
        let r = smooth_leaky_relu(100.0, 0.5, 0.5) / 100.0;
        assert!((0.999..=1.001).contains(&r));
        let expect = (1.5 + 0.5 * erf_series(0.25)) / 2.0;
        assert!((smooth_leaky_relu(1.0, 0.5, 0.5) - expect).abs() < 1e-10);
    }

    pub(crate) fn random_net(widths: &[usize], head: Head, seed: u64) -> NetworkSpec {
        let mut r = rng(seed);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                let act = if j + 2 == widths.len() {
                    ActivationKind::identity()
                } else {
                    ActivationKind::smooth_leaky_relu(0.5, 0.5)
                };
                let b = (0..w[1]).map(|_| r.random_range(-0.5..0.5)).collect();
                LayerSpec::new(gaussian(w[1], w[0], &mut r).scale(0.7), b, act, 100.0)
            })
            .collect();
        NetworkSpec {
            input_dim: widths[0],
            s_in: 100.0,
            layers,
            head,
        }
    }

    /// A separately written forward pass for one input.
    fn straight_line(net: &NetworkSpec, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in &net.layers {
            let mut z = Vec::new();
            for k in 0..l.out_dim() {
                let mut s = l.bias[k];
                for m in 0..l.in_dim() {
                    s += l.weight.get(k, m) * a[m];
                }
                z.push(match l.activation {
                    ActivationKind::SmoothLeakyRelu { alpha, mu } => smooth_leaky_relu(s, alpha, mu),
                    _ => s,
                });
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_examples() {
        let mut net = random_net(&[3, 3, 6], Head::gaussian(1.0), 1);
        let x = [0.3, -1.0, 2.0];
        let z = straight_line(&net, &x);
        let f = (-z.iter().map(|v| v * v).sum::<f64>()).exp();
        match forward(&net, &x).unwrap() {
            Output::Scalar(v) => assert!((v - f).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
        for l in &mut net.layers {
            l.weight = Matrix::zeros(l.out_dim(), l.in_dim());
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        assert_eq!(forward(&net, &x).unwrap(), Output::Scalar(1.0));
        assert!(matches!(forward(&net, &[1.0, 2.0]), Err(Error::Shape(_))));

        let soft = random_net(&[4, 5, 3], Head::Softmax {}, 2);
        match forward(&soft, &[1.0, 0.0, -2.0, 0.5]).unwrap() {
            Output::Probabilities(p) => {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let z = straight_line(&soft, &[1.0, 0.0, -2.0, 0.5]);
                let s: f64 = z.iter().map(|v| v.exp()).sum();
                for (pi, zi) in p.iter().zip(&z) {
                    assert!((pi - zi.exp() / s).abs() < 1e-12);
                }
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn identity_layers_at_zero() {
        let l = LayerSpec::new(Matrix::identity(2), vec![0.0; 2], ActivationKind::identity(), 2.0);
        let net = NetworkSpec {
            input_dim: 2,
            s_in: 2.0,
            layers: vec![l.clone(), l],
            head: Head::gaussian(3.0),
        };
        assert_eq!(forward(&net, &[0.0, 0.0]).unwrap(), Output::Scalar(1.0));
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let net = random_net(&[3, 3, 6], Head::gaussian(1.0), 3);
        let x = gaussian(7, 3, &mut rng(4));
        let y: Vec<f64> = forward_batch(&net, &x)
            .unwrap()
            .into_iter()
            .map(|o| match o {
                Output::Scalar(v) => v,
                _ => unreachable!(),
            })
            .collect();
        let (l, g) = loss_and_grads(&net, &x, &Targets::Values(y), HeadLoss::Squared).unwrap();
        assert_eq!(l, 0.0);
        for w in &g.weights {
            assert!(w.as_slice().iter().all(|v| v.abs() < 1e-12));
        }
        for b in &g.biases {
            assert!(b.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn uniform_cross_entropy_is_log_classes() {
        let mut net = random_net(&[4, 6, 5], Head::Softmax {}, 5);
        let last = net.layers.last_mut().unwrap();
        last.weight = Matrix::zeros(5, 6);
        last.bias = vec![0.3; 5];
        let x = gaussian(9, 4, &mut rng(6));
        let y = Targets::Classes((0..9).map(|i| i % 5).collect());
        let (l, _) = loss_and_grads(&net, &x, &y, HeadLoss::CrossEntropy).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }

    fn fd_check(net: &NetworkSpec, x: &Matrix, y: &Targets, loss: HeadLoss) {
        let (_, g) = loss_and_grads(net, x, y, loss).unwrap();
        let h = 1e-5;
        for j in 0..net.depth() {
            for idx in 0..net.layers[j].weight.as_slice().len() {
                let mut p = net.clone();
                p.layers[j].weight.as_mut_slice()[idx] += h;
                let mut m = net.clone();
                m.layers[j].weight.as_mut_slice()[idx] -= h;
                let num = (mean_loss(&p, x, y, loss).unwrap() - mean_loss(&m, x, y, loss).unwrap()) / (2.0 * h);
                let ana = g.weights[j].as_slice()[idx];
                let rel = (ana - num).abs() / (ana.abs() + num.abs()).max(1e-6);
                assert!(rel < 1e-4, "layer {j} idx {idx}: {ana} vs {num}");
            }
            for k in 0..net.layers[j].bias.len() {
                let mut p = net.clone();
                p.layers[j].bias[k] += h;
                let mut m = net.clone();
                m.layers[j].bias[k] -= h;
                let num = (mean_loss(&p, x, y, loss).unwrap() - mean_loss(&m, x, y, loss).unwrap()) / (2.0 * h);
                let ana = g.biases[j][k];
                let rel = (ana - num).abs() / (ana.abs() + num.abs()).max(1e-6);
                assert!(rel < 1e-4, "bias {j} {k}: {ana} vs {num}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let net = random_net(&[3, 3, 6], Head::gaussian(1.0), 10 + seed);
            let x = gaussian(6, 3, &mut rng(seed));
            let y = Targets::Values((0..6).map(|i| 0.1 * i as f64).collect());
            fd_check(&net, &x, &y, HeadLoss::Squared);

            let net = random_net(&[5, 7, 6, 4], Head::Softmax {}, 20 + seed);
            let x = gaussian(6, 5, &mut rng(seed + 100));
            let y = Targets::Classes(vec![0, 1, 2, 3, 1, 2]);
            fd_check(&net, &x, &y, HeadLoss::CrossEntropy);
        }
    }

    #[test]
    fn mismatched_loss_and_head() {
        let net = random_net(&[3, 3], Head::gaussian(1.0), 1);
        let x = gaussian(2, 3, &mut rng(1));
        assert!(loss_and_grads(&net, &x, &Targets::Classes(vec![0, 1]), HeadLoss::CrossEntropy).is_err());
        assert!(loss_and_grads(&net, &x, &Targets::Values(vec![0.5]), HeadLoss::Squared).is_err());
    }
}
