//! Separable grid resampling under the align-corners convention.
//!
//! One coordinate convention is used everywhere in the crate: the first and
//! last voxel centers of an axis sit exactly at the normalized endpoints, so
//! an output index `j` of an `m`-long axis reads the source at
//! `x = j * (n - 1) / (m - 1)`. The cubic path uses the Keys kernel with
//! `a = -0.5`. Taps that fall outside the lattice use linear extrapolation
//! of the two nearest samples, which keeps constant and linear fields exact
//! all the way to the border.

use crate::Real;
use ndarray::{Array3, ArrayView3, Axis};

const KEYS_A: f64 = -0.5;

fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (KEYS_A + 2.0) * t * t * t - (KEYS_A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        KEYS_A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Tricubic,
    Trilinear,
}

/// Tap positions/weights for one output index along one axis.
struct Taps<F> {
    base: isize,
    weights: [F; 4],
}

fn axis_plan<F: Real>(n: usize, m: usize, interp: Interp) -> Vec<Taps<F>> {
    let mut plan = Vec::with_capacity(m);
    for j in 0..m {
        let x = if m > 1 {
            j as f64 * (n as f64 - 1.0) / (m as f64 - 1.0)
        } else {
            (n as f64 - 1.0) / 2.0
        };
        let i0 = x.floor();
        let t = x - i0;
        let weights = match interp {
            Interp::Tricubic => [keys(t + 1.0), keys(t), keys(1.0 - t), keys(2.0 - t)],
            Interp::Trilinear => [0.0, 1.0 - t, t, 0.0],
        };
        plan.push(Taps {
            base: i0 as isize - 1,
            weights: weights.map(F::of),
        });
    }
    plan
}

/// Read `line[idx]`, linearly extrapolating past either end.
fn fetch<F: Real>(line: &[F], idx: isize) -> F {
    let n = line.len() as isize;
    if idx >= 0 && idx < n {
        line[idx as usize]
    } else if n == 1 {
        line[0]
    } else if idx < 0 {
        let k = F::of(-idx as f64);
        line[0] - k * (line[1] - line[0])
    } else {
        let k = F::of((idx - (n - 1)) as f64);
        line[(n - 1) as usize] + k * (line[(n - 1) as usize] - line[(n - 2) as usize])
    }
}

fn resample_axis<F: Real>(vol: &ArrayView3<F>, axis: usize, m: usize, interp: Interp) -> Array3<F> {
    let n = vol.shape()[axis];
    let plan = axis_plan::<F>(n, m, interp);
    let mut out_shape = [vol.shape()[0], vol.shape()[1], vol.shape()[2]];
    out_shape[axis] = m;
    let mut out = Array3::<F>::zeros(out_shape);

    let mut line = vec![F::zero(); n];
    // Lanes along `axis`; each output lane is a weighted gather of one input lane.
    let in_lanes = vol.lanes(Axis(axis));
    let out_lanes = out.lanes_mut(Axis(axis));
    for (in_lane, mut out_lane) in in_lanes.into_iter().zip(out_lanes) {
        for (dst, src) in line.iter_mut().zip(in_lane.iter()) {
            *dst = *src;
        }
        for (j, taps) in plan.iter().enumerate() {
            let mut acc = F::zero();
            for (k, &w) in taps.weights.iter().enumerate() {
                if w != F::zero() {
                    acc += w * fetch(&line, taps.base + k as isize);
                }
            }
            out_lane[j] = acc;
        }
    }
    out
}

/// Resample a 3D field to `target` shape, one axis at a time.
pub fn resample3<F: Real>(vol: &ArrayView3<F>, target: [usize; 3], interp: Interp) -> Array3<F> {
    let mut cur = resample_axis(vol, 0, target[0], interp);
    cur = resample_axis(&cur.view(), 1, target[1], interp);
    resample_axis(&cur.view(), 2, target[2], interp)
}

/// Round a positively scaled extent to the nearest voxel count (half away
/// from zero), never below 1.
pub fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn constant(shape: (usize, usize, usize), v: f32) -> Array3<f32> {
        Array3::from_elem(shape, v)
    }

    #[test]
    fn constants_are_reproduced_at_any_scale() {
        let vol = constant((7, 6, 5), 0.37);
        for target in [[14, 12, 10], [17, 13, 11], [3, 3, 3]] {
            let out = resample3(&vol.view(), target, Interp::Tricubic);
            for &v in out.iter() {
                assert!((v - 0.37).abs() < 1e-6, "got {v}");
            }
        }
    }

    #[test]
    fn same_shape_is_identity() {
        let vol = Array3::from_shape_fn((6, 5, 4), |(i, j, k)| {
            ((i * 31 + j * 17 + k * 7) as f32 * 0.618).sin()
        });
        let out = resample3(&vol.view(), [6, 5, 4], Interp::Tricubic);
        assert_eq!(vol, out);
    }

    #[test]
    fn linear_ramp_upsamples_exactly() {
        let vol = Array3::from_shape_fn((6, 6, 6), |(i, j, k)| {
            0.1 * i as f32 + 0.25 * j as f32 - 0.05 * k as f32 + 0.3
        });
        let out = resample3(&vol.view(), [12, 12, 12], Interp::Tricubic);
        for ((i, j, k), &v) in out.indexed_iter() {
            let x = i as f32 * 5.0 / 11.0;
            let y = j as f32 * 5.0 / 11.0;
            let z = k as f32 * 5.0 / 11.0;
            let want = 0.1 * x + 0.25 * y - 0.05 * z + 0.3;
            assert!((v - want).abs() < 1e-5, "({i},{j},{k}): {v} vs {want}");
        }
    }

    #[test]
    fn smooth_up_down_round_trip_is_tight() {
        // A 10-sample band-limited line blown up 3x and shrunk back should
        // come back almost unchanged.
        let vol = Array3::from_shape_fn((10, 10, 10), |(i, j, k)| {
            let f = |t: f32| (0.35 * t).sin() + 0.4 * (0.22 * t + 1.0).cos();
            f(i as f32) * f(j as f32 + 2.0) * f(k as f32 + 4.0)
        });
        let up = resample3(&vol.view(), [30, 30, 30], Interp::Tricubic);
        let down = resample3(&up.view(), [10, 10, 10], Interp::Tricubic);
        let rms = (vol
            .iter()
            .zip(down.iter())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / 1000.0)
            .sqrt();
        assert!(rms < 1e-3, "round-trip RMS {rms}");
    }

    #[test]
    fn trilinear_matches_hand_values() {
        let vol = Array3::from_shape_fn((2, 2, 2), |(i, j, k)| (i * 4 + j * 2 + k) as f32);
        let out = resample3(&vol.view(), [3, 2, 2], Interp::Trilinear);
        // Midpoint along axis 0 averages the two corners.
        assert_eq!(out[[1, 0, 0]], 2.0);
        assert_eq!(out[[1, 1, 1]], 5.0);
    }

    #[test]
    fn scaled_len_rounds_half_up() {
        assert_eq!(scaled_len(10, 2.0), 20);
        assert_eq!(scaled_len(10, 2.45), 25); // 24.5 rounds away from zero
        assert_eq!(scaled_len(10, 2.4), 24);
        assert_eq!(scaled_len(1, 0.2), 1);
    }
}
