//! Fully connected layer on `(rows, features)` matrices.

use super::matmul_into;
use crate::Real;
use ndarray::{Array1, Array2, ArrayView2};

#[derive(Clone, Debug)]
pub struct Linear<F> {
    /// `(in_features, out_features)`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Linear {
            weight: Array2::zeros((in_features, out_features)),
            bias: Array1::zeros(out_features),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.ncols()
    }

    /// `y = x W + b`.
    pub fn forward(&self, x: &ArrayView2<F>) -> Array2<F> {
        let mut y = Array2::zeros((x.nrows(), self.out_features()));
        matmul_into(&mut y.view_mut(), x, &self.weight.view(), F::zero());
        for mut row in y.rows_mut() {
            for (o, &b) in row.iter_mut().zip(self.bias.iter()) {
                *o += b;
            }
        }
        y
    }

    /// Accumulate parameter gradients and, if requested, write the input
    /// gradient `dy Wᵀ` into `dx` (overwriting it).
    pub fn backward(
        &self,
        x: &ArrayView2<F>,
        dy: &ArrayView2<F>,
        grad: &mut Linear<F>,
        mut dx: Option<&mut Array2<F>>,
    ) {
        matmul_into(&mut grad.weight.view_mut(), &x.t(), dy, F::one());
        for row in dy.rows() {
            for (g, &d) in grad.bias.iter_mut().zip(row.iter()) {
                *g += d;
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            matmul_into(&mut dx.view_mut(), dy, &self.weight.t(), F::zero());
        }
    }
}
