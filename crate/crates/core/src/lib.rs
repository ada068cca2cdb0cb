//! Continuous super-resolution of diffusion MRI volumes.
//!
//! An anatomy-conditioned implicit-decoder pipeline: a 3D residual dense
//! network turns a 2-channel low-resolution patch (diffusion + T1-weighted)
//! into a 128-channel latent feature volume, and a coordinate MLP decodes
//! intensities at arbitrary continuous positions, so a trained model can
//! upsample a volume by any real factor, integer or not.
//!
//! The crate covers the full workflow: NIfTI I/O and intensity
//! normalization ([`volume`]), patch extraction and the training-time
//! degradation model ([`patches`]), coordinate grids and trilinear feature
//! queries ([`coords`]), the encoder/decoder networks ([`encoder`],
//! [`decoder`]), the image + frequency-domain objective ([`loss`]),
//! training with checkpointing ([`train`]), tiled arbitrary-scale
//! inference ([`engine`]), and PSNR/SSIM evaluation ([`metrics`]).
//! The `csrvolsr` binary exposes all of it as a CLI.

pub mod cli;
pub mod config;
pub mod coords;
pub mod decoder;
pub mod encoder;
pub mod engine;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod nifti;
pub mod nn;
pub mod patches;
pub mod phantom;
pub mod resample;
pub mod rng;
pub mod train;
pub mod volume;

pub use error::{Error, Result};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Scalar type the numeric kernels are generic over.
///
/// Training and inference run at `f32`; gradient verification against
/// finite differences instantiates the same code at `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssignOps
    + ndarray::LinalgScalar
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}
