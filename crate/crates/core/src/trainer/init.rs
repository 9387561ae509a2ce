//! Weight initializers. Biases always start at zero.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::matcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `N(0, 2/fan_in)`.
    Kaiming,
    /// Orthonormal columns (tall/square) or rows (wide) from a sign-fixed QR.
    Orthogonal,
    /// `N(0, 2/fan_in)` redrawn outside two standard deviations.
    TruncatedNormal,
}

/// One kind for every layer, or one kind per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Uniform(InitKind),
    PerLayer(Vec<InitKind>),
}

impl InitSpec {
    pub fn kind(&self, layer: usize) -> Option<InitKind> {
        match self {
            InitSpec::Uniform(k) => Some(*k),
            InitSpec::PerLayer(ks) => ks.get(layer).copied(),
        }
    }
}

pub fn init_weight(kind: InitKind, rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let std = (2.0 / cols as f64).sqrt();
    match kind {
        InitKind::Kaiming => {
            let nd = Normal::new(0.0, std).expect("positive std");
            let data = (0..rows * cols).map(|_| nd.sample(rng)).collect();
            Matrix::new(rows, cols, data).expect("shape")
        }
        InitKind::TruncatedNormal => {
            let data = (0..rows * cols)
                .map(|_| loop {
                    let z: f64 = StandardNormal.sample(rng);
                    if z.abs() <= 2.0 {
                        break z * std;
                    }
                })
                .collect();
            Matrix::new(rows, cols, data).expect("shape")
        }
        InitKind::Orthogonal => orthogonal(rows, cols, rng),
    }
}

fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..c {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.set(i, j, v);
        }
    }
    out
}
