//! Latent feature extractor: a 3D residual dense network.
//!
//! Shallow feature extraction (two 3x3x3 convs), `D` residual dense blocks
//! (each `C` densely connected 3x3x3 convs of growth `G` with ReLU, a
//! 1x1x1 local fusion conv and a local residual), global fusion (1x1x1
//! then 3x3x3) with a global residual back to the first shallow feature
//! map, and a final 3x3x3 conv to 128 channels. There is no upsampling
//! anywhere, so the feature volume keeps the input's spatial shape; all
//! convolutions zero-pad.

use crate::coords::{FeatureVolume, FEATURE_CHANNELS};
use crate::error::{Error, Result};
use crate::nn::conv3::Conv3;
use crate::nn::init::he_fill;
use crate::nn::{relu_backward_inplace, relu_inplace, Parameters};
use crate::rng::substream;
use crate::Real;
use ndarray::{Array2, Array4, ArrayView2, ArrayView4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Residual dense blocks (D).
    pub num_blocks: usize,
    /// Dense convolutions per block (C).
    pub convs_per_block: usize,
    /// Growth channels per dense conv (G).
    pub growth: usize,
    /// Shallow/fusion channel width (G0).
    pub base_channels: usize,
    /// Input channels; 2 for (DWI, T1), 1 for the strict single-channel variant.
    pub in_channels: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_blocks: 4,
            convs_per_block: 4,
            growth: 32,
            base_channels: 64,
            in_channels: 2,
        }
    }
}

impl EncoderConfig {
    /// The compact variant used by smoke tests and desk-scale benchmarks.
    pub fn small() -> Self {
        EncoderConfig {
            num_blocks: 2,
            convs_per_block: 2,
            growth: 16,
            base_channels: 32,
            in_channels: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetworkConfig(msg));
        if self.num_blocks < 1 {
            return bad(format!("num_blocks must be >= 1, got {}", self.num_blocks));
        }
        if self.convs_per_block < 1 {
            return bad(format!(
                "convs_per_block must be >= 1, got {}",
                self.convs_per_block
            ));
        }
        if self.growth < 1 || self.base_channels < 1 {
            return bad("growth and base_channels must be >= 1".to_string());
        }
        if !(1..=2).contains(&self.in_channels) {
            return bad(format!(
                "in_channels must be 1 or 2, got {}",
                self.in_channels
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct DenseBlock<F> {
    convs: Vec<Conv3<F>>,
    fusion: Conv3<F>,
}

/// All encoder weights, keyed by layer path in [`Parameters`] order.
#[derive(Clone, Debug)]
pub struct EncoderParams<F> {
    pub config: EncoderConfig,
    sfe1: Conv3<F>,
    sfe2: Conv3<F>,
    blocks: Vec<DenseBlock<F>>,
    gff1: Conv3<F>,
    gff2: Conv3<F>,
    out: Conv3<F>,
}

impl<F: Real> EncoderParams<F> {
    /// Zero-valued parameter set with the right shapes (used for gradients).
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let g0 = config.base_channels;
        let g = config.growth;
        let c = config.convs_per_block;
        let blocks = (0..config.num_blocks)
            .map(|_| DenseBlock {
                convs: (0..c).map(|i| Conv3::zeros(g, g0 + i * g, 3)).collect(),
                fusion: Conv3::zeros(g0, g0 + c * g, 1),
            })
            .collect();
        Ok(EncoderParams {
            config: *config,
            sfe1: Conv3::zeros(g0, config.in_channels, 3),
            sfe2: Conv3::zeros(g0, g0, 3),
            blocks,
            gff1: Conv3::zeros(g0, config.num_blocks * g0, 1),
            gff2: Conv3::zeros(g0, g0, 3),
            out: Conv3::zeros(FEATURE_CHANNELS, g0, 3),
        })
    }

    fn visit_weights_mut(&mut self, f: &mut dyn FnMut(&mut Conv3<F>)) {
        f(&mut self.sfe1);
        f(&mut self.sfe2);
        for block in &mut self.blocks {
            for conv in &mut block.convs {
                f(conv);
            }
            f(&mut block.fusion);
        }
        f(&mut self.gff1);
        f(&mut self.gff2);
        f(&mut self.out);
    }

    fn visit_convs(&self, f: &mut dyn FnMut(&str, &Conv3<F>)) {
        f("encoder.sfe1", &self.sfe1);
        f("encoder.sfe2", &self.sfe2);
        for (d, block) in self.blocks.iter().enumerate() {
            for (c, conv) in block.convs.iter().enumerate() {
                f(&format!("encoder.rdb{}.conv{}", d + 1, c + 1), conv);
            }
            f(&format!("encoder.rdb{}.lff", d + 1), &block.fusion);
        }
        f("encoder.gff1", &self.gff1);
        f("encoder.gff2", &self.gff2);
        f("encoder.out", &self.out);
    }
}

/// He-initialized encoder parameters; biases zero, deterministic per seed.
pub fn init_params<F: Real>(config: &EncoderConfig, seed: u64) -> Result<EncoderParams<F>> {
    let mut params = EncoderParams::zeros(config)?;
    let mut rng = substream(seed, "init/encoder");
    params.visit_weights_mut(&mut |conv| {
        let fan_in = conv.c_in() * conv.kernel().pow(3);
        he_fill(conv.weight.as_slice_mut().unwrap(), fan_in, &mut rng);
    });
    Ok(params)
}

impl<F: Real> Parameters<F> for EncoderParams<F> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[F])) {
        self.visit_convs(&mut |name, conv| {
            f(
                &format!("{name}.weight"),
                conv.weight.shape(),
                conv.weight.as_slice().unwrap(),
            );
            f(
                &format!("{name}.bias"),
                conv.bias.shape(),
                conv.bias.as_slice().unwrap(),
            );
        });
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [F])) {
        let mut names = Vec::new();
        self.visit_convs(&mut |name, _| names.push(name.to_string()));
        let mut idx = 0;
        self.visit_weights_mut(&mut |conv| {
            f(
                &format!("{}.weight", names[idx]),
                conv.weight.as_slice_mut().unwrap(),
            );
            f(
                &format!("{}.bias", names[idx]),
                conv.bias.as_slice_mut().unwrap(),
            );
            idx += 1;
        });
    }
}

/// Everything the backward pass needs from a forward evaluation.
pub struct EncoderCache<F> {
    spatial: [usize; 3],
    input: Array2<F>,
    f_m1: Array2<F>,
    /// `states[0]` is the second shallow feature map, `states[d]` block d's output.
    states: Vec<Array2<F>>,
    /// Per block, the post-ReLU dense conv outputs.
    dense: Vec<Vec<Array2<F>>>,
    gff1_out: Array2<F>,
    fused: Array2<F>,
}

/// Reshape `(C, h, w, d)` into channels-last `(h*w*d, C)`.
pub fn channels_last<F: Real>(x: &ArrayView4<F>) -> Array2<F> {
    let (c, h, w, d) = x.dim();
    let mut out = Array2::zeros((h * w * d, c));
    for ch in 0..c {
        let plane = x.index_axis(ndarray::Axis(0), ch);
        for (v, &val) in plane.iter().enumerate() {
            out[[v, ch]] = val;
        }
    }
    out
}

fn forward_impl<F: Real>(
    params: &EncoderParams<F>,
    x: &Array2<F>,
    spatial: [usize; 3],
    keep: bool,
) -> (Array2<F>, Option<EncoderCache<F>>) {
    let cfg = &params.config;
    let f_m1 = params.sfe1.forward(&[x.view()], spatial);
    let f0 = params.sfe2.forward(&[f_m1.view()], spatial);

    let mut states: Vec<Array2<F>> = vec![f0];
    let mut dense: Vec<Vec<Array2<F>>> = Vec::new();
    for block in &params.blocks {
        let prev = states.last().unwrap();
        let mut ys: Vec<Array2<F>> = Vec::with_capacity(cfg.convs_per_block);
        for conv in &block.convs {
            let mut pieces: Vec<ArrayView2<F>> = vec![prev.view()];
            pieces.extend(ys.iter().map(|y| y.view()));
            let mut y = conv.forward(&pieces, spatial);
            relu_inplace(&mut y);
            ys.push(y);
        }
        let mut pieces: Vec<ArrayView2<F>> = vec![prev.view()];
        pieces.extend(ys.iter().map(|y| y.view()));
        let mut f_d = block.fusion.forward(&pieces, spatial);
        f_d += prev;
        states.push(f_d);
        if keep {
            dense.push(ys);
        }
    }

    let band_views: Vec<ArrayView2<F>> = states[1..].iter().map(|s| s.view()).collect();
    let gff1_out = params.gff1.forward(&band_views, spatial);
    let gff2_out = params.gff2.forward(&[gff1_out.view()], spatial);
    let mut fused = gff2_out;
    fused += &f_m1;
    let features = params.out.forward(&[fused.view()], spatial);

    let cache = keep.then(|| EncoderCache {
        spatial,
        input: x.clone(),
        f_m1,
        states,
        dense,
        gff1_out,
        fused,
    });
    (features, cache)
}

/// Map a 2-channel LR volume to its same-size 128-channel feature volume.
pub fn encode<F: Real>(lr: &ArrayView4<F>, params: &EncoderParams<F>) -> Result<FeatureVolume<F>> {
    let (c, h, w, d) = lr.dim();
    if c != params.config.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {c} channels, encoder expects {}",
            params.config.in_channels
        )));
    }
    if h < 1 || w < 1 || d < 1 {
        return Err(Error::ShapeTooSmall(format!("({h}, {w}, {d})")));
    }
    let x = channels_last(lr);
    let (feat, _) = forward_impl(params, &x, [h, w, d], false);
    let mut grid = Array4::zeros((h, w, d, FEATURE_CHANNELS));
    for ((v, ch), &val) in feat.indexed_iter() {
        let (i, rem) = (v / (w * d), v % (w * d));
        grid[[i, rem / d, rem % d, ch]] = val;
    }
    FeatureVolume::new(grid)
}

/// Forward pass on channels-last input, keeping what backward needs.
/// Returns features as `(voxels, 128)` in C-order over the spatial box.
pub fn forward_cached<F: Real>(
    params: &EncoderParams<F>,
    x: &Array2<F>,
    spatial: [usize; 3],
) -> (Array2<F>, EncoderCache<F>) {
    let (feat, cache) = forward_impl(params, x, spatial, true);
    (feat, cache.unwrap())
}

/// Accumulate parameter gradients for one sample given the gradient of the
/// objective with respect to the feature matrix.
pub fn backward<F: Real>(
    params: &EncoderParams<F>,
    cache: &EncoderCache<F>,
    dfeat: &ArrayView2<F>,
    grads: &mut EncoderParams<F>,
) {
    let spatial = cache.spatial;
    let cfg = &params.config;
    let voxels: usize = spatial.iter().product();
    let g0 = cfg.base_channels;

    // Final conv.
    let mut dfused = vec![Array2::<F>::zeros((voxels, g0))];
    params.out.backward(
        &[cache.fused.view()],
        spatial,
        dfeat,
        &mut grads.out,
        Some(&mut dfused),
    );
    let dfused = dfused.pop().unwrap();
    // fused = gff2_out + f_m1: the residual forks the gradient.
    let mut d_f_m1 = dfused.clone();
    let mut dgff1_out = vec![Array2::<F>::zeros((voxels, g0))];
    params.gff2.backward(
        &[cache.gff1_out.view()],
        spatial,
        &dfused.view(),
        &mut grads.gff2,
        Some(&mut dgff1_out),
    );
    let dgff1_out = dgff1_out.pop().unwrap();

    // Global fusion fans out to every block output.
    let mut dstates: Vec<Array2<F>> = (0..=cfg.num_blocks)
        .map(|_| Array2::<F>::zeros((voxels, g0)))
        .collect();
    {
        let band_views: Vec<ArrayView2<F>> = cache.states[1..].iter().map(|s| s.view()).collect();
        let mut dbands: Vec<Array2<F>> = (0..cfg.num_blocks)
            .map(|_| Array2::<F>::zeros((voxels, g0)))
            .collect();
        params.gff1.backward(
            &band_views,
            spatial,
            &dgff1_out.view(),
            &mut grads.gff1,
            Some(&mut dbands),
        );
        for (d, db) in dbands.into_iter().enumerate() {
            dstates[d + 1] += &db;
        }
    }

    // Blocks in reverse.
    for d in (0..cfg.num_blocks).rev() {
        let block = &params.blocks[d];
        let gblock = &mut grads.blocks[d];
        let prev = &cache.states[d];
        let ys = &cache.dense[d];
        let df_d = std::mem::replace(&mut dstates[d + 1], Array2::zeros((0, 0)));

        // f_d = prev + fusion(concat); the residual passes straight through.
        dstates[d] += &df_d;

        let mut dys: Vec<Array2<F>> = ys.iter().map(|y| Array2::<F>::zeros(y.raw_dim())).collect();
        {
            let mut pieces: Vec<ArrayView2<F>> = vec![prev.view()];
            pieces.extend(ys.iter().map(|y| y.view()));
            let mut dx: Vec<Array2<F>> = Vec::with_capacity(1 + ys.len());
            dx.push(Array2::<F>::zeros((voxels, g0)));
            for y in ys {
                dx.push(Array2::<F>::zeros(y.raw_dim()));
            }
            block.fusion.backward(
                &pieces,
                spatial,
                &df_d.view(),
                &mut gblock.fusion,
                Some(&mut dx),
            );
            let mut it = dx.into_iter();
            dstates[d] += &it.next().unwrap();
            for dy in dys.iter_mut() {
                *dy += &it.next().unwrap();
            }
        }

        for c in (0..cfg.convs_per_block).rev() {
            let mut dy = std::mem::replace(&mut dys[c], Array2::zeros((0, 0)));
            relu_backward_inplace(&mut dy, &ys[c].view());
            let mut pieces: Vec<ArrayView2<F>> = vec![prev.view()];
            pieces.extend(ys[..c].iter().map(|y| y.view()));
            let mut dx: Vec<Array2<F>> = Vec::with_capacity(1 + c);
            dx.push(Array2::<F>::zeros((voxels, g0)));
            for y in &ys[..c] {
                dx.push(Array2::<F>::zeros(y.raw_dim()));
            }
            block.convs[c].backward(
                &pieces,
                spatial,
                &dy.view(),
                &mut gblock.convs[c],
                Some(&mut dx),
            );
            let mut it = dx.into_iter();
            dstates[d] += &it.next().unwrap();
            for dyp in dys[..c].iter_mut() {
                *dyp += &it.next().unwrap();
            }
        }
    }

    // Shallow feature extraction.
    let df0 = std::mem::replace(&mut dstates[0], Array2::zeros((0, 0)));
    let mut dfm1 = vec![Array2::<F>::zeros((voxels, g0))];
    params.sfe2.backward(
        &[cache.f_m1.view()],
        spatial,
        &df0.view(),
        &mut grads.sfe2,
        Some(&mut dfm1),
    );
    d_f_m1 += &dfm1.pop().unwrap();
    params.sfe1.backward(
        &[cache.input.view()],
        spatial,
        &d_f_m1.view(),
        &mut grads.sfe1,
        None,
    );
}
