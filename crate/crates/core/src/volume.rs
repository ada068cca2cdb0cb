//! Volume loading, validation, normalization, and channel pairing.
//!
//! Diffusion volumes are normalized by the voxelwise mean of the b0
//! references and clipped to `[0, 2]`; anatomical (T1-weighted) volumes are
//! scaled by their 99th percentile into `[0, 1]`. A normalized DWI volume
//! and a normalized T1 volume pair up into the 2-channel input the encoder
//! consumes, with the anatomical image resampled onto the diffusion lattice
//! when the grids differ (the data are assumed co-registered).

use crate::error::{Error, Result};
use crate::nifti;
use crate::resample::{resample3, Interp};
use ndarray::{Array3, Array4, Axis};
use std::fmt;
use std::path::Path;

/// Upper clip for b1000/b0 ratios: tissue ratios are physically <= 1; the
/// headroom keeps noise from being crushed while bounding the dynamic range.
pub const DWI_CLIP_MAX: f32 = 2.0;
/// Divisor floor for the b0 mean; anything at or below it maps to 0.
pub const B0_EPSILON: f64 = 1e-8;
/// Relative grid-spacing disagreement tolerated when pairing volumes.
pub const SPACING_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    DwiB1000,
    B0,
    T1w,
    NormalizedDwi,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Modality::DwiB1000 => "DWI_B1000",
            Modality::B0 => "B0",
            Modality::T1w => "T1W",
            Modality::NormalizedDwi => "NORMALIZED_DWI",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    B0Ratio,
    PercentileUnit,
}

/// A 3D scalar field with voxel spacing and normalization provenance.
#[derive(Clone, Debug)]
pub struct Volume {
    pub data: Array3<f32>,
    pub spacing_mm: [f32; 3],
    pub modality: Modality,
    pub normalization: Normalization,
}

impl Volume {
    pub fn new(
        data: Array3<f32>,
        spacing_mm: [f32; 3],
        modality: Modality,
        normalization: Normalization,
    ) -> Result<Self> {
        let vol = Volume {
            data,
            spacing_mm,
            modality,
            normalization,
        };
        vol.validate()?;
        Ok(vol)
    }

    pub fn shape(&self) -> [usize; 3] {
        let (a, b, c) = self.data.dim();
        [a, b, c]
    }

    fn validate(&self) -> Result<()> {
        let bad = self.data.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(Error::NonFiniteData {
                context: format!("{} volume", self.modality),
                count: bad,
            });
        }
        if self.shape().iter().any(|&n| n == 0) {
            return Err(Error::ShapeMismatch("zero-length axis".into()));
        }
        if self.modality == Modality::NormalizedDwi {
            if let Some(&v) = self
                .data
                .iter()
                .find(|v| **v < 0.0 || **v > DWI_CLIP_MAX)
            {
                return Err(Error::ShapeMismatch(format!(
                    "normalized DWI intensity {v} outside [0, {DWI_CLIP_MAX}]"
                )));
            }
        }
        Ok(())
    }
}

/// Load a NIfTI file; a 4D image yields one [`Volume`] per frame.
pub fn load_volume(path: &Path, modality: Modality) -> Result<Vec<Volume>> {
    let img = nifti::read(path)?;
    let spatial = [img.dims[0], img.dims[1], img.dims[2]];
    let voxels: usize = spatial.iter().product();
    let frames = if img.dims.len() == 4 { img.dims[3] } else { 1 };

    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let slab = &img.data[f * voxels..(f + 1) * voxels];
        let bad = slab.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(Error::NonFiniteData {
                context: format!("{} (frame {f})", path.display()),
                count: bad,
            });
        }
        out.push(Volume {
            data: nifti::to_array3(spatial, slab),
            spacing_mm: img.spacing_mm,
            modality,
            normalization: Normalization::Raw,
        });
    }
    Ok(out)
}

/// Load a file expected to hold exactly one 3D image.
pub fn load_single(path: &Path, modality: Modality) -> Result<Volume> {
    let mut vols = load_volume(path, modality)?;
    if vols.len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} frames, expected a single 3D image",
            path.display(),
            vols.len()
        )));
    }
    Ok(vols.pop().unwrap())
}

/// Persist as little-endian float32 NIfTI-1.
pub fn save_volume(vol: &Volume, path: &Path) -> Result<()> {
    let flat = nifti::from_array3(&vol.data);
    nifti::write(path, &vol.shape(), vol.spacing_mm, &flat)
}

/// Divide b1000 by the voxelwise mean of the b0 references.
///
/// Voxels whose b0 mean is at or below [`B0_EPSILON`] (air) map to 0; the
/// ratio is clipped to `[0, DWI_CLIP_MAX]`.
pub fn normalize_dwi(b1000: &Volume, b0s: &[Volume]) -> Result<Volume> {
    if b0s.is_empty() {
        return Err(Error::EmptyB0List);
    }
    for b0 in b0s {
        if b0.shape() != b1000.shape() {
            return Err(Error::ShapeMismatch(format!(
                "b0 shape {:?} vs b1000 shape {:?}",
                b0.shape(),
                b1000.shape()
            )));
        }
    }
    let inv_n = 1.0 / b0s.len() as f64;
    let mut data = Array3::<f32>::zeros(b1000.data.raw_dim());
    for (idx, out) in data.indexed_iter_mut() {
        let mean_b0: f64 = b0s.iter().map(|b| b.data[idx] as f64).sum::<f64>() * inv_n;
        *out = if mean_b0 <= B0_EPSILON {
            0.0
        } else {
            ((b1000.data[idx] as f64 / mean_b0) as f32).clamp(0.0, DWI_CLIP_MAX)
        };
    }
    Volume::new(
        data,
        b1000.spacing_mm,
        Modality::NormalizedDwi,
        Normalization::B0Ratio,
    )
}

/// Scale by the 99th percentile of nonzero intensities, clipping to `[0, 1]`.
pub fn normalize_t1(t1: &Volume) -> Result<Volume> {
    let mut nonzero: Vec<f32> = t1.data.iter().copied().filter(|v| *v != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::AllZeroVolume);
    }
    nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Nearest-rank percentile.
    let rank = ((0.99 * nonzero.len() as f64).ceil() as usize).clamp(1, nonzero.len());
    let p99 = nonzero[rank - 1];
    if p99 <= 0.0 {
        return Err(Error::AllZeroVolume);
    }
    let data = t1.data.mapv(|v| (v / p99).clamp(0.0, 1.0));
    Ok(Volume {
        data,
        spacing_mm: t1.spacing_mm,
        modality: Modality::T1w,
        normalization: Normalization::PercentileUnit,
    })
}

/// The encoder input: normalized DWI and anatomical intensities on one lattice.
#[derive(Clone, Debug)]
pub struct MultiChannelVolume {
    /// `(2, h, w, d)`; channel 0 is DWI, channel 1 anatomical.
    pub channels: Array4<f32>,
    pub spacing_mm: [f32; 3],
}

impl MultiChannelVolume {
    pub fn shape(&self) -> [usize; 3] {
        let (_, h, w, d) = self.channels.dim();
        [h, w, d]
    }

    pub fn dwi(&self) -> ndarray::ArrayView3<'_, f32> {
        self.channels.index_axis(Axis(0), 0)
    }

    pub fn t1(&self) -> ndarray::ArrayView3<'_, f32> {
        self.channels.index_axis(Axis(0), 1)
    }
}

/// Stack a normalized DWI volume with its anatomical companion.
///
/// When the grids differ the T1 volume is resampled trilinearly onto the
/// DWI lattice; co-registration is assumed, so only grid resampling is
/// performed. A resampled grid whose implied spacing disagrees with the
/// DWI spacing by more than [`SPACING_TOLERANCE`] is rejected.
pub fn pair_anatomical(dwi: &Volume, t1: &Volume) -> Result<MultiChannelVolume> {
    if dwi.modality != Modality::NormalizedDwi {
        return Err(Error::WrongModality {
            expected: Modality::NormalizedDwi.to_string(),
            got: dwi.modality.to_string(),
        });
    }
    if t1.normalization == Normalization::Raw {
        return Err(Error::WrongModality {
            expected: "normalized T1W".into(),
            got: "RAW T1W".into(),
        });
    }

    let target = dwi.shape();
    let t1_data = if t1.shape() == target {
        t1.data.clone()
    } else {
        // Extent must still line up once the grid is matched.
        for axis in 0..3 {
            let (nd, nt) = (target[axis], t1.shape()[axis]);
            if nd < 2 || nt < 2 {
                continue;
            }
            let extent_t1 = (nt as f64 - 1.0) * t1.spacing_mm[axis] as f64;
            let implied = extent_t1 / (nd as f64 - 1.0);
            let rel = (implied / dwi.spacing_mm[axis] as f64 - 1.0).abs();
            if rel > SPACING_TOLERANCE {
                return Err(Error::SpacingMismatch(format!(
                    "axis {axis}: implied T1 spacing {implied:.4}mm vs DWI {:.4}mm",
                    dwi.spacing_mm[axis]
                )));
            }
        }
        resample3(&t1.data.view(), target, Interp::Trilinear)
    };

    let mut channels = Array4::<f32>::zeros((2, target[0], target[1], target[2]));
    channels.index_axis_mut(Axis(0), 0).assign(&dwi.data);
    channels.index_axis_mut(Axis(0), 1).assign(&t1_data);
    Ok(MultiChannelVolume {
        channels,
        spacing_mm: dwi.spacing_mm,
    })
}

/// Save a channel pair as a 4D NIfTI (channels along the 4th axis).
pub fn save_multichannel(mcv: &MultiChannelVolume, path: &Path) -> Result<()> {
    let [h, w, d] = mcv.shape();
    let mut arr = Array4::<f32>::zeros((h, w, d, 2));
    for c in 0..2 {
        arr.index_axis_mut(Axis(3), c)
            .assign(&mcv.channels.index_axis(Axis(0), c));
    }
    let flat = nifti::from_array4(&arr);
    nifti::write(path, &[h, w, d, 2], mcv.spacing_mm, &flat)
}

/// Load a 4D two-frame NIfTI written by [`save_multichannel`].
pub fn load_multichannel(path: &Path) -> Result<MultiChannelVolume> {
    let vols = load_volume(path, Modality::NormalizedDwi)?;
    if vols.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} frames, expected a 2-channel pair",
            path.display(),
            vols.len()
        )));
    }
    let [h, w, d] = vols[0].shape();
    let mut channels = Array4::<f32>::zeros((2, h, w, d));
    channels.index_axis_mut(Axis(0), 0).assign(&vols[0].data);
    channels.index_axis_mut(Axis(0), 1).assign(&vols[1].data);
    Ok(MultiChannelVolume {
        channels,
        spacing_mm: vols[0].spacing_mm,
    })
}

/// Load a (dwi, t1) path pair that is already normalized on disk.
///
/// The DWI file must hold b0-ratio intensities in `[0, 2]`; anything else
/// is rejected with a pointer at the normalization step. The T1 file is
/// percentile-normalized on the fly (a no-op for already-scaled data).
pub fn load_prepared_pair(dwi_path: &Path, t1_path: &Path) -> Result<MultiChannelVolume> {
    let dwi_raw = load_single(dwi_path, Modality::NormalizedDwi)?;
    if dwi_raw
        .data
        .iter()
        .any(|&v| v < 0.0 || v > DWI_CLIP_MAX)
    {
        return Err(Error::WrongModality {
            expected: format!("normalized DWI in [0, {DWI_CLIP_MAX}] (run b0 normalization first)"),
            got: format!("{} with out-of-range intensities", dwi_path.display()),
        });
    }
    let dwi = Volume {
        normalization: Normalization::B0Ratio,
        ..dwi_raw
    };
    let t1 = normalize_t1(&load_single(t1_path, Modality::T1w)?)?;
    pair_anatomical(&dwi, &t1)
}
