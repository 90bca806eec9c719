use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Matrix>,
}

impl ParamSet {
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(
            self.values
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }

    pub fn set_zero(&mut self) {
        for m in &mut self.values {
            m.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Gradients aligned index-for-index with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads(pub Vec<Matrix>);

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            a.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
    }

    /// Sums per-example gradients in the given order.
    pub fn sum_ordered(parts: Vec<Grads>) -> Option<Grads> {
        let mut it = parts.into_iter();
        let mut acc = it.next()?;
        for g in it {
            acc.add_assign(&g);
        }
        Some(acc)
    }
}

/// Uniform Glorot initialisation for a `[fan_in, fan_out]` weight.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect(),
    )
}

pub fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, limit: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect(),
    )
}
