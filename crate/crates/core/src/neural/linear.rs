use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::real::Real;

/// Affine map applied row-wise: `y = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// out x in
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut l = Self::zeros(input, output);
        l.weight.mapv_inplace(|_| T::of(rng.random_range(-bound..bound)));
        l.bias.mapv_inplace(|_| T::of(rng.random_range(-bound..bound)));
        l
    }

    pub fn input(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output(&self) -> usize {
        self.weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn backward(&self, x: &Array2<T>, d_out: &Array2<T>, grad: &mut Linear<T>) -> Array2<T> {
        grad.weight += &d_out.t().dot(x);
        grad.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight)
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.mapv(|v| U::of(v.as_f64())),
            bias: self.bias.mapv(|v| U::of(v.as_f64())),
        }
    }
}
