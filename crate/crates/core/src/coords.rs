//! Normalized coordinate grids and continuous feature-volume queries.
//!
//! Coordinates live in `[-1, 1]^3` with voxel centers of the first and last
//! lattice positions exactly at the endpoints (align-corners). The same
//! mapping is used for coordinate grids, trilinear feature sampling, and
//! the tricubic degradation in [`crate::resample`], so the train-time
//! degradation and test-time queries agree.

use crate::error::{Error, Result};
use crate::Real;
use ndarray::{Array2, Array4, ArrayView2, ArrayView4};

/// Latent channels per voxel produced by the encoder and consumed here.
pub const FEATURE_CHANNELS: usize = 128;

/// Dense normalized coordinates for a target voxel lattice.
#[derive(Clone, Debug)]
pub struct CoordGrid<F> {
    /// `(M, 3)`, rows lexicographic in the (x, y, z) voxel indices.
    pub coords: Array2<F>,
    pub target_shape: [usize; 3],
}

/// Normalized coordinates of an `n`-long axis.
///
/// Computed symmetrically so the endpoints are exactly `±1`, the multiset is
/// exactly invariant under negation, and an odd-length center is exactly 0.
/// A length-1 axis maps to 0.
pub fn axis_coords<F: Real>(n: usize) -> Vec<F> {
    if n == 1 {
        return vec![F::zero()];
    }
    let mut out = vec![F::zero(); n];
    let denom = (n - 1) as f64;
    for k in 0..n / 2 {
        let c = F::of(-1.0 + 2.0 * k as f64 / denom);
        out[k] = c;
        out[n - 1 - k] = -c;
    }
    out
}

/// Dense grid over `shape`, rows ordered lexicographically in (x, y, z).
pub fn make_coord_grid<F: Real>(shape: [usize; 3]) -> CoordGrid<F> {
    let [h, w, d] = shape;
    let xs = axis_coords::<F>(h);
    let ys = axis_coords::<F>(w);
    let zs = axis_coords::<F>(d);
    let mut coords = Array2::<F>::zeros((h * w * d, 3));
    let mut m = 0;
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                coords[[m, 0]] = x;
                coords[[m, 1]] = y;
                coords[[m, 2]] = z;
                m += 1;
            }
        }
    }
    CoordGrid {
        coords,
        target_shape: shape,
    }
}

/// Per-voxel latent features, channels last.
#[derive(Clone, Debug)]
pub struct FeatureVolume<F> {
    /// `(h, w, d, 128)`.
    pub features: Array4<F>,
}

impl<F: Real> FeatureVolume<F> {
    pub fn new(features: Array4<F>) -> Result<Self> {
        let c = features.dim().3;
        if c != FEATURE_CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "feature volume has {c} channels, expected {FEATURE_CHANNELS}"
            )));
        }
        Ok(FeatureVolume { features })
    }

    pub fn source_shape(&self) -> [usize; 3] {
        let (h, w, d, _) = self.features.dim();
        [h, w, d]
    }
}

#[derive(Clone, Copy)]
struct AxisTap {
    i0: usize,
    i1: usize,
    t: f64,
}

fn axis_tap(c: f64, n: usize) -> Result<AxisTap> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::CoordOutOfRange { value: c });
    }
    let u = (c + 1.0) * 0.5 * (n as f64 - 1.0);
    let i0 = (u.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    Ok(AxisTap {
        i0,
        i1,
        t: u - i0 as f64,
    })
}

/// Trilinear interpolation of `features` at normalized `coords`.
///
/// Coordinate `-1` reads lattice index 0 and `+1` index `n-1`; lattice
/// points reproduce the stored vector. Works for any channel count so the
/// oracles can exercise small volumes; [`sample_features`] pins 128.
pub fn trilinear_sample<F: Real>(
    features: &ArrayView4<F>,
    coords: &ArrayView2<F>,
) -> Result<Array2<F>> {
    let (h, w, d, ch) = features.dim();
    let m = coords.nrows();
    let mut out = Array2::<F>::zeros((m, ch));
    for row in 0..m {
        let tx = axis_tap(coords[[row, 0]].f64(), h)?;
        let ty = axis_tap(coords[[row, 1]].f64(), w)?;
        let tz = axis_tap(coords[[row, 2]].f64(), d)?;
        let mut dst = out.row_mut(row);
        for (ix, wx) in [(tx.i0, 1.0 - tx.t), (tx.i1, tx.t)] {
            if wx == 0.0 {
                continue;
            }
            for (iy, wy) in [(ty.i0, 1.0 - ty.t), (ty.i1, ty.t)] {
                if wy == 0.0 {
                    continue;
                }
                for (iz, wz) in [(tz.i0, 1.0 - tz.t), (tz.i1, tz.t)] {
                    if wz == 0.0 {
                        continue;
                    }
                    let wgt = F::of(wx * wy * wz);
                    let src = features.slice(ndarray::s![ix, iy, iz, ..]);
                    for (o, s) in dst.iter_mut().zip(src.iter()) {
                        *o += wgt * *s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Query a 128-channel feature volume at every row of `grid`.
pub fn sample_features<F: Real>(
    fv: &FeatureVolume<F>,
    grid: &CoordGrid<F>,
) -> Result<Array2<F>> {
    trilinear_sample(&fv.features.view(), &grid.coords.view())
}

/// Accumulate the gradient of [`trilinear_sample`] with respect to the
/// feature volume: each query row scatters its upstream gradient onto its
/// eight support corners with the interpolation weights.
pub fn trilinear_sample_backward<F: Real>(
    grad_features: &mut Array4<F>,
    coords: &ArrayView2<F>,
    grad_out: &ArrayView2<F>,
) -> Result<()> {
    let (h, w, d, _ch) = grad_features.dim();
    for row in 0..coords.nrows() {
        let tx = axis_tap(coords[[row, 0]].f64(), h)?;
        let ty = axis_tap(coords[[row, 1]].f64(), w)?;
        let tz = axis_tap(coords[[row, 2]].f64(), d)?;
        let src = grad_out.row(row);
        for (ix, wx) in [(tx.i0, 1.0 - tx.t), (tx.i1, tx.t)] {
            if wx == 0.0 {
                continue;
            }
            for (iy, wy) in [(ty.i0, 1.0 - ty.t), (ty.i1, ty.t)] {
                if wy == 0.0 {
                    continue;
                }
                for (iz, wz) in [(tz.i0, 1.0 - tz.t), (tz.i1, tz.t)] {
                    if wz == 0.0 {
                        continue;
                    }
                    let wgt = F::of(wx * wy * wz);
                    let mut dst = grad_features.slice_mut(ndarray::s![ix, iy, iz, ..]);
                    for (o, s) in dst.iter_mut().zip(src.iter()) {
                        *o += wgt * *s;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Map an HR grid to the coordinates used to query LR features.
///
/// Under the shared align-corners convention the normalized coordinate of a
/// voxel is the same in both lattices, so this is the identity; it exists to
/// make the convention explicit at the call site.
pub fn hr_to_lr_coords<F: Real>(
    hr_grid: &CoordGrid<F>,
    _lr_shape: [usize; 3],
    _hr_shape: [usize; 3],
) -> CoordGrid<F> {
    hr_grid.clone()
}
