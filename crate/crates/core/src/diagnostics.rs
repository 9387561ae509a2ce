//! Per-layer spectral instrumentation: singular values, condition numbers,
//! stable ranks, Koopman factors, and activation/singular-subspace alignment.

use serde::{Deserialize, Serialize};

use crate::bounds::koopman_layer_factor;
use crate::error::{Error, Result};
use crate::matcore::{condition_from_singular_values, singular_values, svd_thin, Matrix};
use crate::network::NetworkSpec;
use crate::real::{format_real, parse_real};

/// Singular-value cutoff selecting the subspace in [`alignment_angle`].
pub const DEFAULT_SV_THRESHOLD: f64 = 0.1;

/// Singular values in non-increasing order.
pub fn layer_spectrum(w: &Matrix) -> Result<Vec<f64>> {
    singular_values(w)
}

fn stable_rank_from(frobenius: f64, sigma_max: f64) -> Result<f64> {
    if !(sigma_max > 0.0) {
        return Err(Error::InvalidInput("stable rank of a zero matrix".to_string()));
    }
    Ok((frobenius / sigma_max).powi(2))
}

/// `‖W‖_F² / ‖W‖²`.
pub fn stable_rank(w: &Matrix) -> Result<f64> {
    let sv = singular_values(w)?;
    stable_rank_from(w.frobenius_norm(), sv[0])
}

/// `|cos θ_max|` where `θ_max` is the largest angle between an activation and the
/// span of the right singular vectors of `w_next` whose singular value exceeds
/// `sv_threshold`. Zero activations are skipped.
pub fn alignment_angle(activations: &[Vec<f64>], w_next: &Matrix, sv_threshold: f64) -> Result<f64> {
    let dim = w_next.cols();
    let dec = svd_thin(w_next)?;
    let basis: Vec<Vec<f64>> = (0..dec.singular_values.len())
        .filter(|&t| dec.singular_values[t] > sv_threshold)
        .map(|t| dec.v.column(t))
        .collect();
    if basis.is_empty() {
        return Err(Error::UndefinedAngle(format!(
            "no singular value of the next layer exceeds the threshold {sv_threshold}"
        )));
    }
    let mut worst: Option<f64> = None;
    for a in activations {
        if a.len() != dim {
            return Err(Error::Shape(format!(
                "activation has length {} but the next layer has {dim} columns",
                a.len()
            )));
        }
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        if norm_sq == 0.0 {
            continue;
        }
        let proj_sq: f64 = basis
            .iter()
            .map(|v| v.iter().zip(a).map(|(x, y)| x * y).sum::<f64>().powi(2))
            .sum();
        let cos = (proj_sq / norm_sq).sqrt().min(1.0);
        worst = Some(worst.map_or(cos, |w: f64| w.min(cos)));
    }
    worst.ok_or_else(|| Error::UndefinedAngle("every activation in the batch is zero".to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    #[serde(with = "crate::real::vec")]
    pub singular_values: Vec<f64>,
    #[serde(with = "crate::real")]
    pub condition_number: f64,
    /// Absent for a zero matrix.
    pub stable_rank: Option<f64>,
    /// `max{1,‖W‖^{s_{j−1}}}/det(WᵀW)^{1/4}`, absent when `W` lacks full column rank.
    pub layer_factor: Option<f64>,
}

impl LayerDiagnostics {
    pub fn of(w: &Matrix, s_prev: f64) -> Result<Self> {
        let sv = singular_values(w)?;
        Ok(Self {
            condition_number: condition_from_singular_values(&sv),
            stable_rank: stable_rank_from(w.frobenius_norm(), sv[0]).ok(),
            layer_factor: koopman_layer_factor(w, s_prev).ok(),
            singular_values: sv,
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("non-empty spectrum")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub layers: Vec<LayerDiagnostics>,
    pub alignment: Option<f64>,
    pub test_metric: Option<f64>,
}

/// Optional per-epoch values stored next to the spectra.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SnapshotExtras {
    pub alignment: Option<f64>,
    pub test_metric: Option<f64>,
}

/// Per-epoch, per-layer spectral time series with strictly increasing epochs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLog {
    records: Vec<EpochRecord>,
}

/// Columns of [`SpectrumLog::to_csv`].
pub const SPECTRUM_CSV_COLUMNS: [&str; 9] = [
    "epoch",
    "layer",
    "sigma_max",
    "sigma_min",
    "cond",
    "stable_rank",
    "koopman_factor",
    "alignment",
    "test_metric",
];

/// One CSV row of a [`SpectrumLog`]; `layer` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub epoch: usize,
    pub layer: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub cond: f64,
    pub stable_rank: Option<f64>,
    pub koopman_factor: Option<f64>,
    pub alignment: Option<f64>,
    pub test_metric: Option<f64>,
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), format_real)
}

fn parse_cell(s: &str, col: &str, line: usize) -> Result<f64> {
    parse_real(s).ok_or_else(|| Error::Parse(format!("line {line}: column {col}: cannot parse {s:?}")))
}

fn parse_opt_cell(s: &str, col: &str, line: usize) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        parse_cell(s, col, line).map(Some)
    }
}

impl SpectrumLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::InvalidInput(format!(
                    "epoch {} does not follow epoch {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Records the spectra of every layer of `net` at `epoch`.
    pub fn snapshot(&mut self, net: &NetworkSpec, epoch: usize, extras: SnapshotExtras) -> Result<&EpochRecord> {
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(j, l)| LayerDiagnostics::of(&l.weight, net.s_prev(j)))
            .collect::<Result<Vec<_>>>()?;
        self.push(EpochRecord {
            epoch,
            layers,
            alignment: extras.alignment,
            test_metric: extras.test_metric,
        })?;
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn rows(&self) -> Vec<SpectrumRow> {
        let mut out = Vec::new();
        for r in &self.records {
            for (j, l) in r.layers.iter().enumerate() {
                out.push(SpectrumRow {
                    epoch: r.epoch,
                    layer: j + 1,
                    sigma_max: l.sigma_max(),
                    sigma_min: l.sigma_min(),
                    cond: l.condition_number,
                    stable_rank: l.stable_rank,
                    koopman_factor: l.layer_factor,
                    alignment: r.alignment,
                    test_metric: r.test_metric,
                });
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SPECTRUM_CSV_COLUMNS)?;
        for r in self.rows() {
            w.write_record([
                r.epoch.to_string(),
                r.layer.to_string(),
                format_real(r.sigma_max),
                format_real(r.sigma_min),
                format_real(r.cond),
                opt_cell(r.stable_rank),
                opt_cell(r.koopman_factor),
                opt_cell(r.alignment),
                opt_cell(r.test_metric),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Parses the output of [`SpectrumLog::to_csv`].
pub fn parse_spectrum_csv(text: &str) -> Result<Vec<SpectrumRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers()?.clone();
    if header.iter().ne(SPECTRUM_CSV_COLUMNS) {
        return Err(Error::Parse(format!("unexpected spectrum CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let int = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {line}: column {}: not an integer", SPECTRUM_CSV_COLUMNS[k])))
        };
        let c = SPECTRUM_CSV_COLUMNS;
        out.push(SpectrumRow {
            epoch: int(0)?,
            layer: int(1)?,
            sigma_max: parse_cell(&rec[2], c[2], line)?,
            sigma_min: parse_cell(&rec[3], c[3], line)?,
            cond: parse_cell(&rec[4], c[4], line)?,
            stable_rank: parse_opt_cell(&rec[5], c[5], line)?,
            koopman_factor: parse_opt_cell(&rec[6], c[6], line)?,
            alignment: parse_opt_cell(&rec[7], c[7], line)?,
            test_metric: parse_opt_cell(&rec[8], c[8], line)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::{charpoly_eigenvalues, gaussian, orthogonal, rng};
    use crate::matcore::condition_number;
    use crate::network::{ActivationKind, Head, LayerSpec};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn spectrum_examples() {
        assert_eq!(layer_spectrum(&Matrix::identity(3)).unwrap(), vec![1.0; 3]);
        assert_eq!(layer_spectrum(&Matrix::from_diag(&[0.5, 2.0])).unwrap(), vec![2.0, 0.5]);
        let mut r = rng(31);
        for _ in 0..20 {
            let w = gaussian(4, 4, &mut r);
            let gram = w.transpose().matmul(&w).unwrap();
            let mut eig = charpoly_eigenvalues(&gram);
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let sv = layer_spectrum(&w).unwrap();
            for (s, e) in sv.iter().zip(&eig) {
                assert!((s - e.max(0.0).sqrt()).abs() < 1e-8, "{s} vs {e}");
            }
        }
    }

    #[test]
    fn stable_rank_examples() {
        let q = orthogonal(5, &mut rng(1));
        assert!((stable_rank(&q).unwrap() - 5.0).abs() < 1e-12);
        let one = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!((stable_rank(&one).unwrap() - 1.0).abs() < 1e-12);
        assert!((stable_rank(&Matrix::from_diag(&[2.0, 1.0, 1.0])).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(stable_rank(&Matrix::zeros(2, 2)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn alignment_examples() {
        // subspace spanned by e1, e2 (singular values 1 > 0.1), e3 excluded
        let w = Matrix::from_diag(&[1.0, 0.5, 0.01]);
        let inside = vec![vec![1.0, 2.0, 0.0], vec![0.0, -3.0, 0.0]];
        assert!((alignment_angle(&inside, &w, 0.1).unwrap() - 1.0).abs() < 1e-15);
        let mut with_orth = inside.clone();
        with_orth.push(vec![0.0, 0.0, 5.0]);
        assert!(alignment_angle(&with_orth, &w, 0.1).unwrap().abs() < 1e-15);
        assert!(matches!(alignment_angle(&inside, &w, 10.0), Err(Error::UndefinedAngle(_))));
        assert!(matches!(
            alignment_angle(&[vec![0.0; 3]], &w, 0.1),
            Err(Error::UndefinedAngle(_))
        ));
    }

    /// Projection oracle from a Gram–Schmidt orthonormalization of the kept right
    /// singular vectors, obtained independently from the eigenvectors of `WᵀW`.
    #[test]
    fn alignment_matches_projector_oracle() {
        let mut r = rng(77);
        for _ in 0..20 {
            let w = gaussian(5, 6, &mut r);
            let thr = 0.5;
            let dec = crate::matcore::svd(&w).unwrap();
            let mut cols: Vec<Vec<f64>> = (0..dec.singular_values.len())
                .filter(|&t| dec.singular_values[t] > thr)
                .map(|t| w.transpose().mat_vec(&dec.u.column(t)))
                .collect();
            // Gram–Schmidt on Wᵀu_t, which span the same subspace
            for i in 0..cols.len() {
                for j in 0..i {
                    let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let cj = cols[j].clone();
                    for (x, y) in cols[i].iter_mut().zip(cj) {
                        *x -= d * y;
                    }
                }
                let n = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                cols[i].iter_mut().for_each(|x| *x /= n);
            }
            let batch: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..6).map(|_| StandardNormal.sample(&mut r)).collect())
                .collect();
            let mut expect = f64::INFINITY;
            for a in &batch {
                let mut p = vec![0.0; 6];
                for q in &cols {
                    let d: f64 = q.iter().zip(a).map(|(x, y)| x * y).sum();
                    for (pi, qi) in p.iter_mut().zip(q) {
                        *pi += d * qi;
                    }
                }
                let cos = p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
                    / (p.iter().map(|x| x * x).sum::<f64>().sqrt() * a.iter().map(|x| x * x).sum::<f64>().sqrt());
                expect = expect.min(cos.abs());
            }
            let got = alignment_angle(&batch, &w, thr).unwrap();
            assert!((got - expect).abs() < 1e-8);
        }
    }

    fn small_net(seed: u64) -> NetworkSpec {
        let mut r = rng(seed);
        let mk = |w: Matrix, s: f64| {
            let rows = w.rows();
            LayerSpec::new(w, vec![0.0; rows], ActivationKind::smooth_leaky_relu(0.5, 0.5), s)
        };
        NetworkSpec {
            input_dim: 3,
            s_in: 1.55,
            layers: vec![
                mk(gaussian(3, 3, &mut r), 1.55),
                mk(Matrix::from_diag(&[1.0, 0.0, 2.0]), 1.55),
                mk(gaussian(6, 3, &mut r), 3.05),
            ],
            head: Head::gaussian(1.0),
        }
    }

    #[test]
    fn snapshots_order_and_recompute() {
        let net = small_net(5);
        let mut log = SpectrumLog::new();
        log.snapshot(&net, 0, SnapshotExtras::default()).unwrap();
        let rec = log
            .snapshot(&net, 3, SnapshotExtras { alignment: Some(0.5), test_metric: Some(0.9) })
            .unwrap()
            .clone();
        for (l, layer) in rec.layers.iter().zip(&net.layers) {
            assert_eq!(l.condition_number, condition_number(&layer.weight).unwrap());
        }
        assert!(rec.layers[1].condition_number.is_infinite());
        assert!(rec.layers[1].layer_factor.is_none());
        assert!(log.snapshot(&net, 3, SnapshotExtras::default()).is_err());
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let net = small_net(6);
        let mut log = SpectrumLog::new();
        log.snapshot(&net, 1, SnapshotExtras::default()).unwrap();
        log.snapshot(&net, 2, SnapshotExtras { alignment: Some(1.0 / 3.0), test_metric: Some(0.1) })
            .unwrap();
        let text = log.to_csv().unwrap();
        assert!(text.contains(",inf,"));
        assert!(text.lines().next().unwrap() == SPECTRUM_CSV_COLUMNS.join(","));
        assert_eq!(parse_spectrum_csv(&text).unwrap(), log.rows());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn spectrum_rotation_invariant(seed in any::<u64>(), r in 1usize..7, c in 1usize..7) {
            let mut g = rng(seed);
            let w = gaussian(r, c, &mut g);
            let rot = orthogonal(r, &mut g).matmul(&w).unwrap().matmul(&orthogonal(c, &mut g)).unwrap();
            let (a, b) = (layer_spectrum(&w).unwrap(), layer_spectrum(&rot).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let sr = stable_rank(&w).unwrap();
            prop_assert!(sr >= 1.0 - 1e-12 && sr <= r.min(c) as f64 + 1e-12);
        }

        #[test]
        fn alignment_in_unit_interval_and_basis_free(seed in any::<u64>(), d in 2usize..7) {
            let mut g = rng(seed);
            let w = gaussian(d, d, &mut g);
            let batch: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..d).map(|_| StandardNormal.sample(&mut g)).collect())
                .collect();
            let thr = layer_spectrum(&w).unwrap()[d / 2] * 0.999;
            let a = alignment_angle(&batch, &w, thr).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            // left rotation changes the left singular vectors but not the kept right subspace
            let q = orthogonal(d, &mut g);
            let b = alignment_angle(&batch, &q.matmul(&w).unwrap(), thr).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
