//! Training objective: voxelwise L1 plus a frequency-domain penalty.
//!
//! The frequency term takes the unnormalized forward 3D DFT of each
//! predicted and target patch and averages the complex modulus of their
//! difference over all bins, then over the batch; it keeps phase, so it is
//! sensitive to translation, not just to spectral magnitude. The total is
//! `l_f = l_r + lambda_k * l_k` with `lambda_k = 0.01` by default.

use crate::error::{Error, Result};
use crate::Real;
use ndarray::{Array3, Array4, ArrayView3, ArrayView4, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;

pub const DEFAULT_LAMBDA_K: f64 = 0.01;

/// Scalar components of one batch objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub l_r: f64,
    pub l_k: f64,
    /// Effective weight; 0 when the frequency term is disabled.
    pub lambda_k: f64,
    pub l_f: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.l_r.is_finite() && self.l_k.is_finite() && self.l_f.is_finite()
    }
}

/// Unnormalized forward 3D DFT of a real patch.
///
/// Convention: no scaling on the forward transform, so a constant patch of
/// value `v` over `V` voxels puts `V*v` in the DC bin and 0 elsewhere.
pub struct FrequencySpectrum<F> {
    pub values: Array3<Complex<F>>,
}

fn fft3_inplace<F: Real>(data: &mut Array3<Complex<F>>, inverse: bool) {
    let mut planner = FftPlanner::<F>::new();
    let dims = [data.dim().0, data.dim().1, data.dim().2];
    for axis in 0..3 {
        let fft = if inverse {
            planner.plan_fft_inverse(dims[axis])
        } else {
            planner.plan_fft_forward(dims[axis])
        };
        let mut line = vec![Complex::new(F::zero(), F::zero()); dims[axis]];
        let lanes = data.lanes_mut(Axis(axis));
        for mut lane in lanes {
            for (dst, src) in line.iter_mut().zip(lane.iter()) {
                *dst = *src;
            }
            fft.process(&mut line);
            for (dst, src) in lane.iter_mut().zip(line.iter()) {
                *dst = *src;
            }
        }
    }
}

/// Forward spectrum of one real-valued patch.
pub fn spectrum<F: Real>(patch: &ArrayView3<F>) -> FrequencySpectrum<F> {
    let mut data = patch.mapv(|v| Complex::new(v, F::zero()));
    fft3_inplace(&mut data, false);
    FrequencySpectrum { values: data }
}

fn check_shapes<F: Real>(pred: &ArrayView4<F>, target: &ArrayView4<F>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Mean absolute difference over every element of the batch.
pub fn recon_loss<F: Real>(pred: &ArrayView4<F>, target: &ArrayView4<F>) -> Result<f64> {
    check_shapes(pred, target)?;
    let n = pred.len() as f64;
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b).f64().abs())
        .sum();
    Ok(sum / n)
}

/// Mean complex-modulus spectral difference: per patch the mean over all
/// frequency bins of `|DFT(pred) - DFT(target)|`, then the mean over the batch.
pub fn freq_loss<F: Real>(pred: &ArrayView4<F>, target: &ArrayView4<F>) -> Result<f64> {
    check_shapes(pred, target)?;
    let batch = pred.dim().0;
    let voxels = pred.len() / batch;
    let mut total = 0.0f64;
    for b in 0..batch {
        let kp = spectrum(&pred.index_axis(Axis(0), b));
        let kt = spectrum(&target.index_axis(Axis(0), b));
        let sum: f64 = kp
            .values
            .iter()
            .zip(kt.values.iter())
            .map(|(a, c)| {
                let d = *a - *c;
                (d.re.f64().powi(2) + d.im.f64().powi(2)).sqrt()
            })
            .sum();
        total += sum / voxels as f64;
    }
    Ok(total / batch as f64)
}

/// Combined objective. With `lambda_k = 0` the frequency term is still
/// reported but contributes nothing.
pub fn total_loss<F: Real>(
    pred: &ArrayView4<F>,
    target: &ArrayView4<F>,
    lambda_k: f64,
) -> Result<LossReport> {
    let l_r = recon_loss(pred, target)?;
    let l_k = freq_loss(pred, target)?;
    Ok(LossReport {
        l_r,
        l_k,
        lambda_k,
        l_f: l_r + lambda_k * l_k,
    })
}

/// Objective plus its gradient with respect to the prediction.
///
/// With `use_freq` false the frequency term is evaluated for the report but
/// excluded from both the total and the gradient (effective weight 0).
pub fn total_loss_with_grad<F: Real>(
    pred: &ArrayView4<F>,
    target: &ArrayView4<F>,
    lambda_k: f64,
    use_freq: bool,
) -> Result<(LossReport, Array4<F>)> {
    check_shapes(pred, target)?;
    let batch = pred.dim().0;
    let voxels = pred.len() / batch;
    let n_total = pred.len() as f64;

    // L1 value and subgradient.
    let mut grad = Array4::<F>::zeros(pred.raw_dim());
    let mut l1_sum = 0.0f64;
    let inv_n = F::of(1.0 / n_total);
    for ((g, &p), &t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let d = p - t;
        l1_sum += d.f64().abs();
        *g = if d > F::zero() {
            inv_n
        } else if d < F::zero() {
            -inv_n
        } else {
            F::zero()
        };
    }
    let l_r = l1_sum / n_total;

    // Frequency term: d l_k / d pred = Re(IDFT(D/|D|)) / (V * B).
    let mut l_k = 0.0f64;
    for b in 0..batch {
        let kp = spectrum(&pred.index_axis(Axis(0), b));
        let kt = spectrum(&target.index_axis(Axis(0), b));
        let mut unit = kp.values;
        let mut sum = 0.0f64;
        for (u, &t) in unit.iter_mut().zip(kt.values.iter()) {
            let d = *u - t;
            let mag = (d.re.f64().powi(2) + d.im.f64().powi(2)).sqrt();
            sum += mag;
            *u = if mag > 0.0 {
                d / F::of(mag)
            } else {
                Complex::new(F::zero(), F::zero())
            };
        }
        l_k += sum / voxels as f64;
        if use_freq {
            fft3_inplace(&mut unit, true);
            let scale = F::of(lambda_k / (voxels as f64 * batch as f64));
            let mut gslice = grad.index_axis_mut(Axis(0), b);
            for (g, u) in gslice.iter_mut().zip(unit.iter()) {
                *g += scale * u.re;
            }
        }
    }
    l_k /= batch as f64;

    let effective_lambda = if use_freq { lambda_k } else { 0.0 };
    let report = LossReport {
        l_r,
        l_k,
        lambda_k: effective_lambda,
        l_f: l_r + effective_lambda * l_k,
    };
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_batch(b: usize, l: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array4::from_shape_fn((b, l, l, l), |_| rng.random::<f64>() - 0.5)
    }

    /// O(V^2) forward DFT straight from the definition.
    pub(crate) fn brute_force_dft(patch: &ArrayView3<f64>) -> Array3<Complex<f64>> {
        let (n1, n2, n3) = patch.dim();
        let mut out = Array3::zeros((n1, n2, n3));
        for k1 in 0..n1 {
            for k2 in 0..n2 {
                for k3 in 0..n3 {
                    let mut acc = Complex::new(0.0, 0.0);
                    for x1 in 0..n1 {
                        for x2 in 0..n2 {
                            for x3 in 0..n3 {
                                let phase = -2.0 * std::f64::consts::PI
                                    * (k1 * x1) as f64
                                    / n1 as f64
                                    - 2.0 * std::f64::consts::PI * (k2 * x2) as f64 / n2 as f64
                                    - 2.0 * std::f64::consts::PI * (k3 * x3) as f64 / n3 as f64;
                                acc += Complex::from_polar(patch[[x1, x2, x3]], phase);
                            }
                        }
                    }
                    out[[k1, k2, k3]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn fft_matches_the_triple_sum_definition() {
        let batch = random_batch(1, 4, 1);
        let patch = batch.index_axis(Axis(0), 0);
        let fast = spectrum(&patch).values;
        let slow = brute_force_dft(&patch);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn spectrum_of_real_input_is_hermitian() {
        let batch = random_batch(1, 6, 2);
        let spec = spectrum(&batch.index_axis(Axis(0), 0)).values;
        for k1 in 0..6 {
            for k2 in 0..6 {
                for k3 in 0..6 {
                    let a = spec[[k1, k2, k3]];
                    let b = spec[[(6 - k1) % 6, (6 - k2) % 6, (6 - k3) % 6]].conj();
                    assert!((a - b).norm() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn identical_inputs_have_zero_losses() {
        let batch = random_batch(3, 5, 3);
        assert_eq!(recon_loss(&batch.view(), &batch.view()).unwrap(), 0.0);
        assert_eq!(freq_loss(&batch.view(), &batch.view()).unwrap(), 0.0);
        let report = total_loss(&batch.view(), &batch.view(), 0.01).unwrap();
        assert_eq!(report.l_f, 0.0);
    }

    #[test]
    fn recon_loss_hand_cases() {
        let target = random_batch(2, 4, 4);
        let pred = target.mapv(|v| v + 0.5);
        assert!((recon_loss(&pred.view(), &target.view()).unwrap() - 0.5).abs() < 1e-12);

        let a = Array4::from_shape_vec((1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let b = Array4::from_shape_vec((1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        assert!((recon_loss(&a.view(), &b.view()).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_puts_exactly_delta_in_the_frequency_loss() {
        // DFT of a constant delta is V*delta at DC and 0 elsewhere, so the
        // per-bin mean is delta.
        let target = random_batch(2, 4, 5);
        let delta = 0.37;
        let pred = target.mapv(|v| v + delta);
        let lk = freq_loss(&pred.view(), &target.view()).unwrap();
        assert!((lk - delta).abs() < 1e-7, "{lk}");
        let report = total_loss(&pred.view(), &target.view(), 0.01).unwrap();
        assert!((report.l_f - 1.01 * delta).abs() < 1e-7);
    }

    #[test]
    fn freq_loss_matches_the_brute_force_oracle() {
        let pred = random_batch(2, 4, 11);
        let target = random_batch(2, 4, 12);
        let fast = freq_loss(&pred.view(), &target.view()).unwrap();
        let mut slow = 0.0;
        for b in 0..2 {
            let kp = brute_force_dft(&pred.index_axis(Axis(0), b));
            let kt = brute_force_dft(&target.index_axis(Axis(0), b));
            let sum: f64 = kp.iter().zip(kt.iter()).map(|(a, c)| (a - c).norm()).sum();
            slow += sum / 64.0;
        }
        slow /= 2.0;
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn pure_exponential_difference_checks_against_the_oracle() {
        // pred - target = a*cos(2*pi*x/N): energy in two conjugate bins.
        let l = 6usize;
        let target = random_batch(1, l, 13);
        let mut pred = target.clone();
        let a = 0.25;
        for ((_, x, _, _), v) in pred.indexed_iter_mut() {
            *v += a * (2.0 * std::f64::consts::PI * x as f64 / l as f64).cos();
        }
        let fast = freq_loss(&pred.view(), &target.view()).unwrap();
        let kp = brute_force_dft(&pred.index_axis(Axis(0), 0));
        let kt = brute_force_dft(&target.index_axis(Axis(0), 0));
        let slow: f64 =
            kp.iter().zip(kt.iter()).map(|(x, y)| (x - y).norm()).sum::<f64>() / (l * l * l) as f64;
        assert!((fast - slow).abs() < 1e-9);
        // Two bins of magnitude a*V/2 each: mean = a/V per bin sum = a / (l^3) * l^3... value a.
        assert!((fast - a).abs() < 1e-9, "{fast}");
    }

    #[test]
    fn frequency_loss_is_translation_sensitive() {
        let target = random_batch(1, 5, 21);
        let mut shifted = Array4::<f64>::zeros(target.raw_dim());
        for ((b, x, y, z), v) in shifted.indexed_iter_mut() {
            *v = target[[b, (x + 1) % 5, y, z]];
        }
        let base = freq_loss(&target.view(), &target.view()).unwrap();
        let moved = freq_loss(&shifted.view(), &target.view()).unwrap();
        assert_eq!(base, 0.0);
        assert!(moved > 1e-3, "shift must change the loss, got {moved}");
    }

    #[test]
    fn lambda_zero_reduces_to_l1() {
        let pred = random_batch(2, 4, 31);
        let target = random_batch(2, 4, 32);
        let report = total_loss(&pred.view(), &target.view(), 0.0).unwrap();
        assert_eq!(report.l_f, report.l_r);
        assert!(report.l_k > 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        use crate::nn::gradcheck::relative_error;
        use std::cell::RefCell;
        let target = random_batch(2, 4, 41);
        // Keep |D| away from zero so the modulus is smooth at the probe.
        let pred = RefCell::new(target.mapv(|v| 1.3 * v + 0.4));
        let lambda = 0.01;

        let loss = || -> f64 {
            total_loss(&pred.borrow().view(), &target.view(), lambda)
                .unwrap()
                .l_f
        };
        let (_, grad) =
            total_loss_with_grad(&pred.borrow().view(), &target.view(), lambda, true).unwrap();
        let flat_grad: Vec<f64> = grad.iter().copied().collect();
        for idx in [0usize, 17, 63, 100, 127] {
            let err = relative_error(
                &loss,
                |k| pred.borrow().as_slice().unwrap()[k],
                |k, v| pred.borrow_mut().as_slice_mut().unwrap()[k] = v,
                idx,
                flat_grad[idx],
                1e-6,
            );
            assert!(err < 1e-4, "grad[{idx}]: rel err {err}");
        }
    }

    #[test]
    fn disabled_frequency_term_reports_but_does_not_contribute() {
        let pred = random_batch(1, 4, 51);
        let target = random_batch(1, 4, 52);
        let (report, grad) =
            total_loss_with_grad(&pred.view(), &target.view(), 0.01, false).unwrap();
        assert!(report.l_k > 0.0);
        assert_eq!(report.l_f, report.l_r);
        assert_eq!(report.lambda_k, 0.0);
        // The gradient is exactly the L1 subgradient.
        let n = pred.len() as f64;
        for (g, (&p, &t)) in grad.iter().zip(pred.iter().zip(target.iter())) {
            let want = (p - t).signum() / n;
            assert_eq!(*g, want);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = random_batch(1, 4, 61);
        let b = random_batch(1, 5, 62);
        assert!(matches!(
            recon_loss(&a.view(), &b.view()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            freq_loss(&a.view(), &b.view()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
