//! Network building blocks: linear and 3D convolution layers with explicit
//! backward passes, He initialization, and Adam.
//!
//! Activations are kept channels-last as `(voxels, channels)` matrices so
//! every heavy operation lowers to a GEMM. Everything is single-threaded
//! and deterministic: identical inputs give bit-identical outputs.

pub mod adam;
pub mod conv3;
pub mod gradcheck;
pub mod init;
pub mod linear;

use crate::Real;
use ndarray::{Array2, ArrayView2};

/// Named-tensor traversal in a fixed order; the optimizer and the
/// checkpoint format both key off it.
pub trait Parameters<F> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[F]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [F]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, data| n += data.len());
        n
    }

    fn tensor_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.visit(&mut |_, _, data| sizes.push(data.len()));
        sizes
    }

    /// (name, shape) for every tensor, in visit order.
    fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, _| out.push((name.to_string(), shape.to_vec())));
        out
    }
}

pub(crate) fn matmul_into<F: Real>(
    out: &mut ndarray::ArrayViewMut2<F>,
    a: &ArrayView2<F>,
    b: &ArrayView2<F>,
    beta: F,
) {
    ndarray::linalg::general_mat_mul(F::one(), a, b, beta, out);
}

pub fn relu_inplace<F: Real>(x: &mut Array2<F>) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Mask `grad` by the ReLU activation pattern, read off the *output* `y`.
pub fn relu_backward_inplace<F: Real>(grad: &mut Array2<F>, y: &ArrayView2<F>) {
    for (g, &v) in grad.iter_mut().zip(y.iter()) {
        if v <= F::zero() {
            *g = F::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_and_its_mask_agree() {
        let mut x = array![[1.0f32, -2.0], [0.0, 3.0]];
        let pre = x.clone();
        relu_inplace(&mut x);
        assert_eq!(x, array![[1.0, 0.0], [0.0, 3.0]]);
        let mut g = array![[5.0f32, 5.0], [5.0, 5.0]];
        relu_backward_inplace(&mut g, &x.view());
        // Gradient passes exactly where the activation stayed positive.
        for ((gv, &xv), _) in g.iter().zip(pre.iter()).zip(0..) {
            assert_eq!(*gv, if xv > 0.0 { 5.0 } else { 0.0 });
        }
    }
}
