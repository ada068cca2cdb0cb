//! Minimal NIfTI-1 reader/writer.
//!
//! Covers what the pipeline needs: 3D/4D single-file images (`.nii`,
//! `.nii.gz`), the common voxel datatypes on read, little-endian float32
//! on write, and header spacing. Extensions, `.hdr/.img` pairs and
//! orientation matrices are out of scope; spatial metadata beyond
//! `pixdim` is ignored.

use crate::error::{Error, Result};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array3, Array4};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

/// Decoded image: raw f32 voxels (x fastest in `data`), shape, and spacing.
#[derive(Debug)]
pub struct NiftiImage {
    /// Spatial dims plus any 4th-axis frame count.
    pub dims: Vec<usize>,
    pub spacing_mm: [f32; 3],
    /// Voxels in NIfTI (Fortran) order: x varies fastest.
    pub data: Vec<f32>,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let raw = std::fs::read(path)?;
    if is_gz(path) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("gzip decode failed: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct RawHeader<'a> {
    bytes: &'a [u8],
    swap: bool,
}

impl<'a> RawHeader<'a> {
    fn i16_at(&self, off: usize) -> i16 {
        let b: [u8; 2] = self.bytes[off..off + 2].try_into().unwrap();
        if self.swap {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }
    fn f32_at(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.swap {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }
}

/// Read a `.nii`/`.nii.gz` file. 4D files keep the frame count in `dims[3]`.
pub fn read(path: &Path) -> Result<NiftiImage> {
    let bytes = read_bytes(path)?;
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < VOX_OFFSET {
        return Err(malformed("file shorter than a NIfTI-1 header"));
    }

    let sizeof_hdr_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let sizeof_hdr_be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let swap = match (sizeof_hdr_le, sizeof_hdr_be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(malformed("sizeof_hdr is not 348")),
    };
    let hdr = RawHeader { bytes: &bytes, swap };

    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        if magic == b"ni1\0" {
            return Err(malformed("two-file (.hdr/.img) NIfTI is not supported"));
        }
        return Err(malformed("missing NIfTI-1 magic"));
    }

    let ndim = hdr.i16_at(40);
    if !(3..=4).contains(&ndim) {
        return Err(malformed(&format!("expected 3D or 4D image, dim[0]={ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for axis in 0..ndim as usize {
        let d = hdr.i16_at(42 + 2 * axis);
        if d < 1 {
            return Err(malformed(&format!("dim[{}]={} is not positive", axis + 1, d)));
        }
        dims.push(d as usize);
    }
    // A 4D header with a single frame is a plain 3D image.
    if dims.len() == 4 && dims[3] == 1 {
        dims.pop();
    }

    let mut spacing = [0f32; 3];
    for (axis, s) in spacing.iter_mut().enumerate() {
        *s = hdr.f32_at(80 + 4 * (axis + 1));
        if !s.is_finite() || *s <= 0.0 {
            return Err(malformed(&format!("non-positive pixdim[{}]", axis + 1)));
        }
    }

    let datatype = hdr.i16_at(70);
    let vox_offset = hdr.f32_at(108) as usize;
    let offset = vox_offset.max(VOX_OFFSET);
    let n: usize = dims.iter().product();
    let elem = match datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(malformed(&format!("unsupported datatype {other}"))),
    };
    if bytes.len() < offset + n * elem {
        return Err(malformed("file truncated: voxel data shorter than header dims"));
    }
    let raw = &bytes[offset..offset + n * elem];

    let take = |i: usize, width: usize| -> &[u8] { &raw[i * width..(i + 1) * width] };
    let mut data: Vec<f32> = Vec::with_capacity(n);
    for i in 0..n {
        let v = match datatype {
            DT_UINT8 => raw[i] as f32,
            DT_INT16 => {
                let b: [u8; 2] = take(i, 2).try_into().unwrap();
                (if swap { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }) as f32
            }
            DT_UINT16 => {
                let b: [u8; 2] = take(i, 2).try_into().unwrap();
                (if swap { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) }) as f32
            }
            DT_INT32 => {
                let b: [u8; 4] = take(i, 4).try_into().unwrap();
                (if swap { i32::from_be_bytes(b) } else { i32::from_le_bytes(b) }) as f32
            }
            DT_FLOAT32 => {
                let b: [u8; 4] = take(i, 4).try_into().unwrap();
                if swap {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                }
            }
            DT_FLOAT64 => {
                let b: [u8; 8] = take(i, 8).try_into().unwrap();
                (if swap { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) }) as f32
            }
            _ => unreachable!(),
        };
        data.push(v);
    }

    // scl_slope/scl_inter rescaling, per the standard (slope 0 means "unset").
    let slope = hdr.f32_at(112);
    let inter = hdr.f32_at(116);
    if slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    Ok(NiftiImage {
        dims,
        spacing_mm: spacing,
        data,
    })
}

fn build_header(dims: &[usize], spacing: [f32; 3]) -> Vec<u8> {
    let mut h = vec![0u8; HEADER_SIZE];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    let ndim = dims.len() as i16;
    h[40..42].copy_from_slice(&ndim.to_le_bytes());
    for (axis, &d) in dims.iter().enumerate() {
        h[42 + 2 * axis..44 + 2 * axis].copy_from_slice(&(d as i16).to_le_bytes());
    }
    for axis in dims.len()..7 {
        h[42 + 2 * axis..44 + 2 * axis].copy_from_slice(&1i16.to_le_bytes());
    }
    h[70..72].copy_from_slice(&DT_FLOAT32.to_le_bytes());
    h[72..74].copy_from_slice(&32i16.to_le_bytes()); // bitpix
    h[80..84].copy_from_slice(&1f32.to_le_bytes()); // pixdim[0]
    for axis in 0..3 {
        h[84 + 4 * axis..88 + 4 * axis].copy_from_slice(&spacing[axis].to_le_bytes());
    }
    for axis in 3..7 {
        h[84 + 4 * axis..88 + 4 * axis].copy_from_slice(&1f32.to_le_bytes());
    }
    h[108..112].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    h[112..116].copy_from_slice(&1f32.to_le_bytes()); // scl_slope
    // xyzt_units: mm (2)
    h[123] = 2;
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

/// Write voxels (given x-fastest) as little-endian float32 NIfTI-1.
pub fn write(path: &Path, dims: &[usize], spacing_mm: [f32; 3], data: &[f32]) -> Result<()> {
    assert_eq!(
        dims.iter().product::<usize>(),
        data.len(),
        "voxel count must match dims"
    );
    let mut bytes = build_header(dims, spacing_mm);
    bytes.resize(VOX_OFFSET, 0);
    bytes.reserve(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = File::create(path)?;
    if is_gz(path) {
        let mut enc = GzEncoder::new(&mut file, Compression::fast());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        file.write_all(&bytes)?;
    }
    Ok(())
}

/// Reorder an x-fastest voxel buffer into a C-layout `Array3` indexed (x, y, z).
pub fn to_array3(dims: [usize; 3], data: &[f32]) -> Array3<f32> {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let mut arr = Array3::zeros((nx, ny, nz));
    let mut idx = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                arr[[x, y, z]] = data[idx];
                idx += 1;
            }
        }
    }
    arr
}

/// Flatten an `Array3` indexed (x, y, z) into x-fastest order for writing.
pub fn from_array3(arr: &Array3<f32>) -> Vec<f32> {
    let (nx, ny, nz) = arr.dim();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.push(arr[[x, y, z]]);
            }
        }
    }
    out
}

/// Flatten a 4D array indexed (x, y, z, t) into NIfTI order (x fastest, t slowest).
pub fn from_array4(arr: &Array4<f32>) -> Vec<f32> {
    let (nx, ny, nz, nt) = arr.dim();
    let mut out = Vec::with_capacity(nx * ny * nz * nt);
    for t in 0..nt {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    out.push(arr[[x, y, z, t]]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float32_round_trip_preserves_data_and_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.nii");
        let dims = [4usize, 3, 2];
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        write(&path, &dims, [1.25, 1.25, 1.25], &data).unwrap();
        let img = read(&path).unwrap();
        assert_eq!(img.dims, vec![4, 3, 2]);
        assert_eq!(img.spacing_mm, [1.25, 1.25, 1.25]);
        assert_eq!(img.data, data);
    }

    #[test]
    fn gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.nii.gz");
        let data: Vec<f32> = (0..60).map(|i| (i as f32).sin()).collect();
        write(&path, &[3, 4, 5], [0.7, 0.8, 0.9], &data).unwrap();
        let img = read(&path).unwrap();
        assert_eq!(img.dims, vec![3, 4, 5]);
        assert_eq!(img.data, data);
    }

    #[test]
    fn missing_file_is_reported() {
        let err = read(Path::new("/nonexistent/v.nii")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn garbage_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.nii");
        std::fs::write(&path, vec![9u8; 500]).unwrap();
        let err = read(&path).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
    }

    #[test]
    fn array3_round_trip_is_identity() {
        let arr = Array3::from_shape_fn((3, 4, 5), |(x, y, z)| (x * 100 + y * 10 + z) as f32);
        let flat = from_array3(&arr);
        let back = to_array3([3, 4, 5], &flat);
        assert_eq!(arr, back);
    }
}
