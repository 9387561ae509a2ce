//! Datasets: the synthetic regression problem and the bundled 8×8 digits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{select_rows, Targets};
use crate::error::{Error, Result};
use crate::matcore::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Targets,
    pub held_out_inputs: Matrix,
    pub held_out_targets: Targets,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Targets, held_out_inputs: Matrix, held_out_targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() || held_out_inputs.rows() != held_out_targets.len() {
            return Err(Error::Shape("input and target counts differ".to_string()));
        }
        if inputs.cols() != held_out_inputs.cols() {
            return Err(Error::Shape("training and held-out feature counts differ".to_string()));
        }
        if inputs.rows() == 0 || held_out_inputs.rows() == 0 {
            return Err(Error::InvalidInput("dataset splits must be non-empty".to_string()));
        }
        let finite = |t: &Targets| match t {
            Targets::Values(v) => v.iter().all(|x| x.is_finite()),
            Targets::Classes(_) => true,
        };
        if !inputs.is_finite() || !held_out_inputs.is_finite() || !finite(&targets) || !finite(&held_out_targets) {
            return Err(Error::InvalidInput("dataset contains non-finite values".to_string()));
        }
        Ok(Self {
            inputs,
            targets,
            held_out_inputs,
            held_out_targets,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }
}

pub const SYNTHETIC_DIM: usize = 3;

/// `t(x) = exp(−‖2x − 1‖²)`.
pub fn synthetic_target(x: &[f64]) -> f64 {
    (-x.iter().map(|v| (2.0 * v - 1.0).powi(2)).sum::<f64>()).exp()
}

/// `n` training and `10 n` held-out standard-normal points in `R³` labelled by
/// [`synthetic_target`]. Training points are drawn first from one seeded stream.
pub fn make_synthetic(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let data: Vec<f64> = (0..rows * SYNTHETIC_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = Matrix::new(rows, SYNTHETIC_DIM, data).expect("shape");
        let t: Vec<f64> = (0..rows).map(|i| synthetic_target(m.row(i))).collect();
        (m, Targets::Values(t))
    };
    let (x, y) = draw(n);
    let (hx, hy) = draw(10 * n);
    Dataset::new(x, y, hx, hy)
}

const DIGITS_CSV: &str = include_str!("../../data/digits.csv");
pub const DIGITS_SAMPLES: usize = 1797;
pub const DIGITS_TRAIN: usize = 1500;
pub const DIGITS_FEATURES: usize = 64;
pub const DIGITS_CLASSES: usize = 10;

/// Bundled 8×8 handwritten digits with pixel intensities scaled to `[0, 1]`.
pub fn digits_all() -> Result<(Matrix, Vec<usize>)> {
    let mut rd = csv::Reader::from_reader(DIGITS_CSV.as_bytes());
    let mut data = Vec::with_capacity(DIGITS_SAMPLES * DIGITS_FEATURES);
    let mut labels = Vec::with_capacity(DIGITS_SAMPLES);
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("digits line {}: bad value {s:?}", i + 2)))
        };
        labels.push(parse(&rec[0])? as usize);
        for k in 1..=DIGITS_FEATURES {
            data.push(parse(&rec[k])? / 16.0);
        }
    }
    Ok((Matrix::new(labels.len(), DIGITS_FEATURES, data)?, labels))
}

/// Seeded shuffle of the digits, split into 1500 training and 297 test samples.
pub fn digits_dataset(seed: u64) -> Result<Dataset> {
    let (x, y) = digits_all()?;
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, te) = idx.split_at(DIGITS_TRAIN);
    let pick = |ix: &[usize]| ix.iter().map(|&i| y[i]).collect::<Vec<_>>();
    Dataset::new(
        select_rows(&x, tr),
        Targets::Classes(pick(tr)),
        select_rows(&x, te),
        Targets::Classes(pick(te)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_target_examples() {
        assert_eq!(synthetic_target(&[0.5, 0.5, 0.5]), 1.0);
        assert!((synthetic_target(&[0.0; 3]) - (-3f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(50, 3).unwrap();
        let b = make_synthetic(50, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.held_out_inputs.rows(), 500);
        assert_ne!(a, make_synthetic(50, 4).unwrap());
    }

    #[test]
    fn digits_split() {
        let d = digits_dataset(0).unwrap();
        assert_eq!(d.n(), 1500);
        assert_eq!(d.held_out_inputs.rows(), 297);
        assert!(d.inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let Targets::Classes(c) = &d.targets else { panic!() };
        for k in 0..10 {
            assert!(c.iter().filter(|&&x| x == k).count() > 100);
        }
    }
}
