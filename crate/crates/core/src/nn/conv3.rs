//! 3D convolution on channels-last activations, lowered to GEMM.
//!
//! Activations are `(voxels, channels)` with voxels in C-order over the
//! spatial box. Inputs arrive as a list of channel pieces so densely
//! connected blocks never materialize their concatenations; the column
//! gather reads straight from each piece. 3x3x3 kernels use zero padding 1
//! (shape preserving), 1x1x1 kernels are plain channel mixes.

use super::matmul_into;
use crate::Real;
use ndarray::{Array1, Array2, Array5, ArrayView2, ArrayViewMut2, s};

/// Voxels per im2col block; bounds the gather buffer to a few MB.
const BLOCK: usize = 4096;

#[derive(Clone, Debug)]
pub struct Conv3<F> {
    /// `(c_out, c_in, k, k, k)` with `k` 1 or 3.
    pub weight: Array5<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Conv3<F> {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        assert!(k == 1 || k == 3, "kernel must be 1 or 3");
        Conv3 {
            weight: Array5::zeros((c_out, c_in, k, k, k)),
            bias: Array1::zeros(c_out),
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.dim().0
    }

    pub fn c_in(&self) -> usize {
        self.weight.dim().1
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    /// Weight as a `(kᶟ·c_in, c_out)` GEMM operand, rows offset-major.
    fn weight_matrix(&self) -> Array2<F> {
        let (c_out, c_in, k, _, _) = self.weight.dim();
        let taps = k * k * k;
        let mut mat = Array2::zeros((taps * c_in, c_out));
        for co in 0..c_out {
            for ci in 0..c_in {
                let mut o = 0;
                for dx in 0..k {
                    for dy in 0..k {
                        for dz in 0..k {
                            mat[[o * c_in + ci, co]] = self.weight[[co, ci, dx, dy, dz]];
                            o += 1;
                        }
                    }
                }
            }
        }
        mat
    }

    fn add_bias(&self, y: &mut Array2<F>) {
        for mut row in y.rows_mut() {
            for (o, &b) in row.iter_mut().zip(self.bias.iter()) {
                *o += b;
            }
        }
    }

    /// Convolve; `pieces` are channel groups whose widths sum to `c_in`.
    pub fn forward(&self, pieces: &[ArrayView2<F>], spatial: [usize; 3]) -> Array2<F> {
        let voxels: usize = spatial.iter().product();
        debug_assert!(pieces.iter().all(|p| p.nrows() == voxels));
        debug_assert_eq!(pieces.iter().map(|p| p.ncols()).sum::<usize>(), self.c_in());
        let mut y = Array2::zeros((voxels, self.c_out()));

        if self.kernel() == 1 {
            // Channel mix: accumulate piece GEMMs against weight row bands.
            let wmat = self.weight_matrix();
            let mut row0 = 0;
            for (i, piece) in pieces.iter().enumerate() {
                let band = wmat.slice(s![row0..row0 + piece.ncols(), ..]);
                matmul_into(
                    &mut y.view_mut(),
                    piece,
                    &band,
                    if i == 0 { F::zero() } else { F::one() },
                );
                row0 += piece.ncols();
            }
        } else {
            let wmat = self.weight_matrix();
            let c_in = self.c_in();
            let mut col = Array2::<F>::zeros((BLOCK.min(voxels), 27 * c_in));
            let mut v0 = 0;
            while v0 < voxels {
                let v1 = (v0 + BLOCK).min(voxels);
                let rows = v1 - v0;
                gather_block(pieces, spatial, v0, v1, c_in, &mut col.view_mut());
                let mut yb = y.slice_mut(s![v0..v1, ..]);
                matmul_into(&mut yb, &col.slice(s![..rows, ..]), &wmat.view(), F::zero());
                v0 = v1;
            }
        }
        self.add_bias(&mut y);
        y
    }

    /// Accumulate parameter gradients; when `dx` is given, accumulate the
    /// input gradient into the matching piece buffers.
    pub fn backward(
        &self,
        pieces: &[ArrayView2<F>],
        spatial: [usize; 3],
        dy: &ArrayView2<F>,
        grad: &mut Conv3<F>,
        mut dx: Option<&mut [Array2<F>]>,
    ) {
        let voxels: usize = spatial.iter().product();
        for row in dy.rows() {
            for (g, &d) in grad.bias.iter_mut().zip(row.iter()) {
                *g += d;
            }
        }

        if self.kernel() == 1 {
            let wmat = self.weight_matrix();
            let mut dwmat = Array2::<F>::zeros(wmat.raw_dim());
            let mut row0 = 0;
            for (i, piece) in pieces.iter().enumerate() {
                let width = piece.ncols();
                let mut band = dwmat.slice_mut(s![row0..row0 + width, ..]);
                matmul_into(&mut band, &piece.t(), dy, F::zero());
                if let Some(dx) = dx.as_deref_mut() {
                    let wband = wmat.slice(s![row0..row0 + width, ..]);
                    matmul_into(&mut dx[i].view_mut(), dy, &wband.t(), F::one());
                }
                row0 += width;
            }
            self.unflatten_weight_grad(&dwmat, grad);
        } else {
            let wmat = self.weight_matrix();
            let c_in = self.c_in();
            let mut dwmat = Array2::<F>::zeros(wmat.raw_dim());
            let mut col = Array2::<F>::zeros((BLOCK.min(voxels), 27 * c_in));
            let mut dcol = Array2::<F>::zeros((BLOCK.min(voxels), 27 * c_in));
            let mut v0 = 0;
            while v0 < voxels {
                let v1 = (v0 + BLOCK).min(voxels);
                let rows = v1 - v0;
                gather_block(pieces, spatial, v0, v1, c_in, &mut col.view_mut());
                let dyb = dy.slice(s![v0..v1, ..]);
                matmul_into(
                    &mut dwmat.view_mut(),
                    &col.slice(s![..rows, ..]).t(),
                    &dyb,
                    F::one(),
                );
                if let Some(dx) = dx.as_deref_mut() {
                    let mut dcb = dcol.slice_mut(s![..rows, ..]);
                    matmul_into(&mut dcb, &dyb, &wmat.t(), F::zero());
                    scatter_block(dx, spatial, v0, v1, c_in, &dcol.slice(s![..rows, ..]));
                }
                v0 = v1;
            }
            self.unflatten_weight_grad(&dwmat, grad);
        }
    }

    fn unflatten_weight_grad(&self, dwmat: &Array2<F>, grad: &mut Conv3<F>) {
        let (c_out, c_in, k, _, _) = self.weight.dim();
        for co in 0..c_out {
            for ci in 0..c_in {
                let mut o = 0;
                for dx in 0..k {
                    for dy in 0..k {
                        for dz in 0..k {
                            grad.weight[[co, ci, dx, dy, dz]] += dwmat[[o * c_in + ci, co]];
                            o += 1;
                        }
                    }
                }
            }
        }
    }
}

fn decompose(v: usize, spatial: [usize; 3]) -> (usize, usize, usize) {
    let wd = spatial[1] * spatial[2];
    (v / wd, (v % wd) / spatial[2], v % spatial[2])
}

/// Fill `col` rows `[0, v1-v0)` with the 27-neighborhood of voxels
/// `[v0, v1)`, zero outside the box. Columns are offset-major, channels of
/// each piece in order within an offset.
fn gather_block<F: Real>(
    pieces: &[ArrayView2<F>],
    spatial: [usize; 3],
    v0: usize,
    v1: usize,
    c_in: usize,
    col: &mut ArrayViewMut2<F>,
) {
    let [h, w, d] = spatial;
    for v in v0..v1 {
        let (i, j, k) = decompose(v, spatial);
        let mut row = col.row_mut(v - v0);
        let row = row.as_slice_mut().expect("col rows are contiguous");
        let mut o = 0;
        for dx in -1i64..=1 {
            let x = i as i64 + dx;
            for dy in -1i64..=1 {
                let y = j as i64 + dy;
                for dz in -1i64..=1 {
                    let z = k as i64 + dz;
                    let seg = &mut row[o * c_in..(o + 1) * c_in];
                    o += 1;
                    if x < 0 || y < 0 || z < 0 || x >= h as i64 || y >= w as i64 || z >= d as i64 {
                        seg.fill(F::zero());
                        continue;
                    }
                    let n = (x as usize * w + y as usize) * d + z as usize;
                    let mut at = 0;
                    for piece in pieces {
                        let src = piece.row(n);
                        let src = src.as_slice().expect("piece rows are contiguous");
                        seg[at..at + src.len()].copy_from_slice(src);
                        at += src.len();
                    }
                }
            }
        }
    }
}

/// Adjoint of [`gather_block`]: scatter-add column gradients back onto the
/// input pieces.
fn scatter_block<F: Real>(
    dx: &mut [Array2<F>],
    spatial: [usize; 3],
    v0: usize,
    v1: usize,
    c_in: usize,
    dcol: &ndarray::ArrayView2<F>,
) {
    let [h, w, d] = spatial;
    for v in v0..v1 {
        let (i, j, k) = decompose(v, spatial);
        let row = dcol.row(v - v0);
        let row = row.as_slice().expect("dcol rows are contiguous");
        let mut o = 0;
        for dx_off in -1i64..=1 {
            let x = i as i64 + dx_off;
            for dy_off in -1i64..=1 {
                let y = j as i64 + dy_off;
                for dz_off in -1i64..=1 {
                    let z = k as i64 + dz_off;
                    let seg = &row[o * c_in..(o + 1) * c_in];
                    o += 1;
                    if x < 0 || y < 0 || z < 0 || x >= h as i64 || y >= w as i64 || z >= d as i64 {
                        continue;
                    }
                    let n = (x as usize * w + y as usize) * d + z as usize;
                    let mut at = 0;
                    for piece in dx.iter_mut() {
                        let width = piece.ncols();
                        let mut dst = piece.row_mut(n);
                        let dst = dst.as_slice_mut().expect("dx rows are contiguous");
                        for (a, b) in dst.iter_mut().zip(&seg[at..at + width]) {
                            *a += *b;
                        }
                        at += width;
                    }
                }
            }
        }
    }
}
