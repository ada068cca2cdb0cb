//! Implicit function network: (coordinate, feature vector) -> intensity.
//!
//! Eight fully connected layers with ReLU after the first seven and a
//! linear head; a learned projection of the raw 131-dim input joins the
//! trunk right after the fourth ReLU. Each query row is independent of
//! every other row.

use crate::coords::FEATURE_CHANNELS;
use crate::error::{Error, Result};
use crate::nn::init::he_fill;
use crate::nn::linear::Linear;
use crate::nn::{relu_backward_inplace, relu_inplace, Parameters};
use crate::rng::substream;
use crate::Real;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

/// Coordinate dims plus feature channels.
pub const DECODER_IN_DIM: usize = 3 + FEATURE_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderConfig {
    /// Main fully connected layers; 8 in paper-faithful mode.
    pub num_layers: usize,
    /// Hidden width (W).
    pub hidden_width: usize,
    /// The skip joins the output of this ReLU; 4 in paper-faithful mode.
    pub skip_at: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            num_layers: 8,
            hidden_width: 256,
            skip_at: 4,
        }
    }
}

impl DecoderConfig {
    /// The compact variant used by smoke tests and desk-scale benchmarks.
    pub fn small() -> Self {
        DecoderConfig {
            hidden_width: 128,
            ..Default::default()
        }
    }

    /// Whether this matches the published topology (8 layers, skip at 4).
    /// Other settings exist only for ablations and are non-faithful.
    pub fn is_paper_faithful(&self) -> bool {
        self.num_layers == 8 && self.skip_at == 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::InvalidNetworkConfig(format!(
                "num_layers must be >= 2, got {}",
                self.num_layers
            )));
        }
        if self.hidden_width < 1 {
            return Err(Error::InvalidNetworkConfig("hidden_width must be >= 1".into()));
        }
        if !(1..self.num_layers).contains(&self.skip_at) {
            return Err(Error::InvalidNetworkConfig(format!(
                "skip_at must lie in [1, {}], got {}",
                self.num_layers - 1,
                self.skip_at
            )));
        }
        Ok(())
    }
}

/// Decoder weights: `num_layers` main linears plus the skip projection.
#[derive(Clone, Debug)]
pub struct DecoderParams<F> {
    pub config: DecoderConfig,
    layers: Vec<Linear<F>>,
    skip: Linear<F>,
}

impl<F: Real> DecoderParams<F> {
    pub fn zeros(config: &DecoderConfig) -> Result<Self> {
        config.validate()?;
        let w = config.hidden_width;
        let n = config.num_layers;
        let mut layers = Vec::with_capacity(n);
        for k in 0..n {
            let d_in = if k == 0 { DECODER_IN_DIM } else { w };
            let d_out = if k == n - 1 { 1 } else { w };
            layers.push(Linear::zeros(d_in, d_out));
        }
        Ok(DecoderParams {
            config: *config,
            layers,
            skip: Linear::zeros(DECODER_IN_DIM, w),
        })
    }

    /// Zero the output head; useful for smoke-testing the linear head rule.
    pub fn zero_final_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.fill(F::zero());
        last.bias.fill(F::zero());
    }
}

/// He-initialized decoder parameters; biases zero, deterministic per seed.
pub fn init_params<F: Real>(config: &DecoderConfig, seed: u64) -> Result<DecoderParams<F>> {
    let mut params = DecoderParams::zeros(config)?;
    let mut rng = substream(seed, "init/decoder");
    for layer in params.layers.iter_mut() {
        let fan_in = layer.in_features();
        he_fill(layer.weight.as_slice_mut().unwrap(), fan_in, &mut rng);
    }
    let fan_in = params.skip.in_features();
    he_fill(params.skip.weight.as_slice_mut().unwrap(), fan_in, &mut rng);
    Ok(params)
}

impl<F: Real> Parameters<F> for DecoderParams<F> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[F])) {
        for (k, layer) in self.layers.iter().enumerate() {
            f(
                &format!("decoder.layer{}.weight", k + 1),
                layer.weight.shape(),
                layer.weight.as_slice().unwrap(),
            );
            f(
                &format!("decoder.layer{}.bias", k + 1),
                layer.bias.shape(),
                layer.bias.as_slice().unwrap(),
            );
        }
        f(
            "decoder.skip.weight",
            self.skip.weight.shape(),
            self.skip.weight.as_slice().unwrap(),
        );
        f(
            "decoder.skip.bias",
            self.skip.bias.shape(),
            self.skip.bias.as_slice().unwrap(),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [F])) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            f(
                &format!("decoder.layer{}.weight", k + 1),
                layer.weight.as_slice_mut().unwrap(),
            );
            f(
                &format!("decoder.layer{}.bias", k + 1),
                layer.bias.as_slice_mut().unwrap(),
            );
        }
        f(
            "decoder.skip.weight",
            self.skip.weight.as_slice_mut().unwrap(),
        );
        f("decoder.skip.bias", self.skip.bias.as_slice_mut().unwrap());
    }
}

/// Activations retained for the backward pass.
pub struct DecoderCache<F> {
    /// `inputs[0]` is x0; `inputs[k]` feeds layer k+1 (post-ReLU, post-skip).
    inputs: Vec<Array2<F>>,
    /// Pre-skip ReLU output at the skip layer (its mask differs from the
    /// post-skip activation stored in `inputs`).
    pre_skip: Array2<F>,
}

/// Concatenate coordinates and features into decoder input rows.
pub fn assemble_input<F: Real>(coords: &ArrayView2<F>, feats: &ArrayView2<F>) -> Array2<F> {
    let m = coords.nrows();
    debug_assert_eq!(feats.nrows(), m);
    let mut x0 = Array2::zeros((m, DECODER_IN_DIM));
    x0.slice_mut(s![.., 0..3]).assign(coords);
    x0.slice_mut(s![.., 3..]).assign(feats);
    x0
}

fn forward_impl<F: Real>(
    params: &DecoderParams<F>,
    x0: Array2<F>,
    keep: bool,
) -> (Array1<F>, Option<DecoderCache<F>>) {
    let n = params.config.num_layers;
    let skip_at = params.config.skip_at;
    let mut inputs: Vec<Array2<F>> = Vec::with_capacity(n);
    let mut pre_skip = Array2::zeros((0, 0));
    inputs.push(x0);

    for k in 0..n - 1 {
        let mut h = params.layers[k].forward(&inputs[k].view());
        relu_inplace(&mut h);
        if k + 1 == skip_at {
            if keep {
                pre_skip = h.clone();
            }
            let skip_out = params.skip.forward(&inputs[0].view());
            h += &skip_out;
        }
        inputs.push(h);
    }
    let out = params.layers[n - 1].forward(&inputs[n - 1].view());
    let preds = out.column(0).to_owned();

    let cache = keep.then(|| DecoderCache { inputs, pre_skip });
    (preds, cache)
}

/// Predict one intensity per (coordinate, feature) row.
pub fn decode<F: Real>(
    coords: &ArrayView2<F>,
    feats: &ArrayView2<F>,
    params: &DecoderParams<F>,
) -> Result<Array1<F>> {
    if coords.nrows() != feats.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} coordinate rows vs {} feature rows",
            coords.nrows(),
            feats.nrows()
        )));
    }
    if feats.ncols() != FEATURE_CHANNELS || coords.ncols() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected (M, 3) coords and (M, {FEATURE_CHANNELS}) features, got (M, {}) and (M, {})",
            coords.ncols(),
            feats.ncols()
        )));
    }
    for &c in coords.iter() {
        if !(-F::one()..=F::one()).contains(&c) {
            return Err(Error::CoordOutOfRange { value: c.f64() });
        }
    }
    if feats.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("decoder features".into()));
    }
    let x0 = assemble_input(coords, feats);
    let (preds, _) = forward_impl(params, x0, false);
    Ok(preds)
}

/// Forward pass that keeps activations; input validation is the caller's job.
pub fn forward_cached<F: Real>(
    params: &DecoderParams<F>,
    x0: Array2<F>,
) -> (Array1<F>, DecoderCache<F>) {
    let (preds, cache) = forward_impl(params, x0, true);
    (preds, cache.unwrap())
}

/// Accumulate parameter gradients; returns the gradient with respect to the
/// assembled input rows (columns 3.. are the feature gradient).
pub fn backward<F: Real>(
    params: &DecoderParams<F>,
    cache: &DecoderCache<F>,
    dpred: &ArrayView1<F>,
    grads: &mut DecoderParams<F>,
) -> Array2<F> {
    let n = params.config.num_layers;
    let skip_at = params.config.skip_at;
    let m = dpred.len();

    let mut dout = Array2::zeros((m, 1));
    dout.column_mut(0).assign(dpred);

    // Head.
    let mut dh = Array2::zeros(cache.inputs[n - 1].raw_dim());
    params.layers[n - 1].backward(
        &cache.inputs[n - 1].view(),
        &dout.view(),
        &mut grads.layers[n - 1],
        Some(&mut dh),
    );

    let mut dx0_extra = Array2::zeros(cache.inputs[0].raw_dim());
    for k in (0..n - 1).rev() {
        if k + 1 == skip_at {
            // h_{k+1} = relu(L(h_k)) + skip(x0): fork before masking.
            params.skip.backward(
                &cache.inputs[0].view(),
                &dh.view(),
                &mut grads.skip,
                Some(&mut dx0_extra),
            );
            relu_backward_inplace(&mut dh, &cache.pre_skip.view());
        } else {
            relu_backward_inplace(&mut dh, &cache.inputs[k + 1].view());
        }
        let mut dx = Array2::zeros(cache.inputs[k].raw_dim());
        params.layers[k].backward(
            &cache.inputs[k].view(),
            &dh.view(),
            &mut grads.layers[k],
            Some(&mut dx),
        );
        dh = dx;
    }
    dh += &dx0_extra;
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{probe_indices, relative_error};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::cell::RefCell;

    fn small() -> DecoderConfig {
        DecoderConfig {
            num_layers: 8,
            hidden_width: 16,
            skip_at: 4,
        }
    }

    fn random_batch(m: usize, seed: u64) -> (Array2<f32>, Array2<f32>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let coords = Array2::from_shape_fn((m, 3), |_| rng.random::<f32>() * 2.0 - 1.0);
        let feats = Array2::from_shape_fn((m, FEATURE_CHANNELS), |_| rng.random::<f32>() - 0.5);
        (coords, feats)
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let params = init_params::<f32>(&small(), 1).unwrap();
        let (coords, feats) = random_batch(33, 2);
        let out = decode(&coords.view(), &feats.view(), &params).unwrap();
        let perm: Vec<usize> = (0..33).rev().collect();
        let coords_p = coords.select(ndarray::Axis(0), &perm);
        let feats_p = feats.select(ndarray::Axis(0), &perm);
        let out_p = decode(&coords_p.view(), &feats_p.view(), &params).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            assert_eq!(out_p[i], out[pi]);
        }
    }

    #[test]
    fn single_row_equals_its_batch_entry() {
        let params = init_params::<f32>(&small(), 3).unwrap();
        let (coords, feats) = random_batch(1000, 4);
        let batch = decode(&coords.view(), &feats.view(), &params).unwrap();
        for m in [0usize, 499, 999] {
            let c = coords.slice(s![m..m + 1, ..]);
            let f = feats.slice(s![m..m + 1, ..]);
            let single = decode(&c, &f, &params).unwrap();
            assert!(
                (single[0] - batch[m]).abs() < 1e-6,
                "row {m}: {} vs {}",
                single[0],
                batch[m]
            );
        }
    }

    #[test]
    fn zeroed_head_returns_zero_everywhere() {
        let mut params = init_params::<f32>(&small(), 5).unwrap();
        params.zero_final_layer();
        let (coords, feats) = random_batch(17, 6);
        let out = decode(&coords.view(), &feats.view(), &params).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_audits_eight_layers_plus_skip() {
        let params = init_params::<f32>(&DecoderConfig::default(), 7).unwrap();
        let names: Vec<String> = params.manifest().into_iter().map(|(n, _)| n).collect();
        let mains: Vec<&String> = names
            .iter()
            .filter(|n| n.contains(".layer") && n.ends_with(".weight"))
            .collect();
        assert_eq!(mains.len(), 8);
        assert!(names.iter().any(|n| n == "decoder.skip.weight"));
        // Head outputs a single scalar.
        params.visit(&mut |name, shape, _| {
            if name == "decoder.layer8.weight" {
                assert_eq!(shape[1], 1);
            }
        });
    }

    #[test]
    fn skip_position_is_validated() {
        for bad in [0usize, 8, 20] {
            let cfg = DecoderConfig {
                skip_at: bad,
                ..Default::default()
            };
            assert!(matches!(
                init_params::<f32>(&cfg, 1),
                Err(Error::InvalidNetworkConfig(_))
            ));
        }
        assert!(DecoderConfig::default().is_paper_faithful());
        assert!(!DecoderConfig {
            num_layers: 6,
            hidden_width: 64,
            skip_at: 3
        }
        .is_paper_faithful());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = init_params::<f32>(&small(), 9).unwrap();
        let b = init_params::<f32>(&small(), 9).unwrap();
        let flat = |p: &DecoderParams<f32>| {
            let mut v = Vec::new();
            p.visit(&mut |_, _, data| v.extend_from_slice(data));
            v
        };
        assert_eq!(flat(&a), flat(&b));
    }

    #[test]
    fn out_of_range_and_non_finite_inputs_error() {
        let params = init_params::<f32>(&small(), 10).unwrap();
        let (mut coords, mut feats) = random_batch(4, 11);
        coords[[2, 1]] = 1.5;
        assert!(matches!(
            decode(&coords.view(), &feats.view(), &params),
            Err(Error::CoordOutOfRange { .. })
        ));
        coords[[2, 1]] = 0.5;
        feats[[1, 7]] = f32::NAN;
        assert!(matches!(
            decode(&coords.view(), &feats.view(), &params),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn output_is_continuous_in_the_coordinate() {
        let params = init_params::<f32>(&small(), 12).unwrap();
        let (coords, feats) = random_batch(1, 13);
        let base = decode(&coords.view(), &feats.view(), &params).unwrap()[0];
        let mut prev_gap = f32::INFINITY;
        for exp in 1..6 {
            let delta = 0.1f32.powi(exp);
            let mut moved = coords.clone();
            moved[[0, 0]] = (moved[[0, 0]] + delta).min(1.0);
            let out = decode(&moved.view(), &feats.view(), &params).unwrap()[0];
            let gap = (out - base).abs();
            assert!(gap <= prev_gap.max(1e-5), "delta {delta}: {gap} vs {prev_gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let cfg = DecoderConfig {
            num_layers: 8,
            hidden_width: 10,
            skip_at: 4,
        };
        let params = RefCell::new(init_params::<f64>(&cfg, 21).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let m = 12;
        let coords = Array2::from_shape_fn((m, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let feats = Array2::from_shape_fn((m, FEATURE_CHANNELS), |_| rng.random::<f64>() - 0.5);
        let proj: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();

        let loss = || -> f64 {
            let out = decode(&coords.view(), &feats.view(), &params.borrow()).unwrap();
            out.iter().zip(proj.iter()).map(|(a, b)| a * b).sum()
        };

        let mut grads = DecoderParams::<f64>::zeros(&cfg).unwrap();
        let dx0 = {
            let p = params.borrow();
            let x0 = assemble_input(&coords.view(), &feats.view());
            let (_, cache) = forward_cached(&p, x0);
            let dpred = Array1::from_vec(proj.clone());
            backward(&p, &cache, &dpred.view(), &mut grads)
        };

        let mut flat_grad: Vec<(String, Vec<f64>)> = Vec::new();
        grads.visit(&mut |name, _, data| flat_grad.push((name.to_string(), data.to_vec())));
        for (tensor_idx, (name, gdata)) in flat_grad.iter().enumerate() {
            for &idx in probe_indices(gdata.len(), 3).iter() {
                let get = |k: usize| -> f64 {
                    let mut v = 0.0;
                    let mut ti = 0;
                    params.borrow().visit(&mut |_, _, data| {
                        if ti == tensor_idx {
                            v = data[k];
                        }
                        ti += 1;
                    });
                    v
                };
                let set = |k: usize, val: f64| {
                    let mut ti = 0;
                    params.borrow_mut().visit_mut(&mut |_, data| {
                        if ti == tensor_idx {
                            data[k] = val;
                        }
                        ti += 1;
                    });
                };
                let err = relative_error(&loss, get, set, idx, gdata[idx], 1e-6);
                assert!(err < 1e-4, "{name}[{idx}]: rel err {err}");
            }
        }

        // Feature gradient (the path into the encoder) checks out too.
        let feats_cell = RefCell::new(feats.clone());
        let loss_feats = || -> f64 {
            let out = decode(&coords.view(), &feats_cell.borrow().view(), &params.borrow()).unwrap();
            out.iter().zip(proj.iter()).map(|(a, b)| a * b).sum()
        };
        for idx in [0usize, 64, 127] {
            let err = relative_error(
                &loss_feats,
                |k| feats_cell.borrow()[[3, k]],
                |k, v| feats_cell.borrow_mut()[[3, k]] = v,
                idx,
                dx0[[3, 3 + idx]],
                1e-6,
            );
            assert!(err < 1e-4, "feature grad [{idx}]: rel err {err}");
        }
    }
}
