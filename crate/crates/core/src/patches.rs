//! Training-sample construction: source patches, scale sampling, HR crops,
//! and the tricubic degradation that makes each LR/HR pair.
//!
//! From every paired volume, fixed-size source patches (default nine of
//! 40^3) are drawn uniformly over foreground-valid corners. A training pair
//! crops the central `round(10*s)`^3 block, keeps its DWI channel as the HR
//! target, and downsamples both channels to 10^3 with the same separable
//! tricubic kernel the rest of the crate uses, so the LR DWI channel equals
//! the degraded HR target exactly.

use crate::error::{Error, Result};
use crate::resample::{resample3, scaled_len, Interp};
use crate::volume::MultiChannelVolume;
use ndarray::{s, Array3, Array4, ArrayView4, Axis};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Uniform};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Edge length of a low-resolution training patch.
pub const LR_PATCH: usize = 10;
/// Edge length of a source patch cut from the paired volume.
pub const SOURCE_PATCH: usize = 40;
/// Source patches drawn per volume.
pub const PATCHES_PER_VOLUME: usize = 9;
/// Fraction of DWI voxels that must be nonzero for a corner to be valid.
pub const FOREGROUND_FRACTION: f64 = 0.10;
/// Scale range sampled during training.
pub const SCALE_RANGE: (f64, f64) = (2.0, 3.0);

/// Upsampling factor; sampled in [2, 3] for training, any >1 at inference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleFactor(pub f64);

impl ScaleFactor {
    /// HR patch edge for this scale: `round(10 * s)`.
    pub fn hr_len(self) -> usize {
        scaled_len(LR_PATCH, self.0)
    }

    pub fn in_training_range(self) -> bool {
        (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&self.0)
    }
}

/// Draw `s ~ U(2, 3)`.
pub fn sample_scale(rng: &mut ChaCha12Rng) -> ScaleFactor {
    let dist = Uniform::new(SCALE_RANGE.0, SCALE_RANGE.1).expect("static range");
    ScaleFactor(dist.sample(rng))
}

/// A `(2, 40, 40, 40)` block cut from a paired volume, with provenance.
#[derive(Clone, Debug)]
pub struct SourcePatch {
    pub data: Array4<f32>,
    pub corner: [usize; 3],
    pub subject: String,
}

/// One training sample: 2-channel LR input, single-channel HR target.
#[derive(Clone, Debug)]
pub struct MultiChannelPatchPair {
    /// `(2, 10, 10, 10)`.
    pub lr: Array4<f32>,
    /// `(L, L, L)` with `L = round(10 * s)`.
    pub hr: Array3<f32>,
    pub scale: ScaleFactor,
    pub source_id: String,
    pub corner: [usize; 3],
}

/// All corners whose `size`-cube passes the foreground rule, found with a
/// summed-area table over the nonzero-DWI indicator.
fn foreground_corners(vol: &MultiChannelVolume, size: usize) -> Vec<[usize; 3]> {
    let [h, w, d] = vol.shape();
    let dwi = vol.dwi();
    let mut sat = vec![0u32; (h + 1) * (w + 1) * (d + 1)];
    let at = |i: usize, j: usize, k: usize| i * (w + 1) * (d + 1) + j * (d + 1) + k;
    for i in 0..h {
        for j in 0..w {
            for k in 0..d {
                let ind = (dwi[[i, j, k]] != 0.0) as u32;
                sat[at(i + 1, j + 1, k + 1)] = ind
                    + sat[at(i, j + 1, k + 1)]
                    + sat[at(i + 1, j, k + 1)]
                    + sat[at(i + 1, j + 1, k)]
                    - sat[at(i, j, k + 1)]
                    - sat[at(i, j + 1, k)]
                    - sat[at(i + 1, j, k)]
                    + sat[at(i, j, k)];
            }
        }
    }
    let need = (FOREGROUND_FRACTION * (size * size * size) as f64).ceil() as u32;
    let mut corners = Vec::new();
    for i in 0..=(h - size) {
        for j in 0..=(w - size) {
            for k in 0..=(d - size) {
                let (i2, j2, k2) = (i + size, j + size, k + size);
                let count = sat[at(i2, j2, k2)] + sat[at(i, j, k2)] + sat[at(i, j2, k)]
                    + sat[at(i2, j, k)]
                    - sat[at(i, j2, k2)]
                    - sat[at(i2, j, k2)]
                    - sat[at(i2, j2, k)]
                    - sat[at(i, j, k)];
                if count >= need {
                    corners.push([i, j, k]);
                }
            }
        }
    }
    corners
}

/// Cut `count` source patches at corners drawn uniformly over the
/// foreground-valid positions. Deterministic for a given generator state.
pub fn extract_patches(
    vol: &MultiChannelVolume,
    count: usize,
    size: usize,
    subject: &str,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<SourcePatch>> {
    let shape = vol.shape();
    if shape.iter().any(|&n| n < size) {
        return Err(Error::VolumeTooSmall(format!(
            "shape {shape:?} cannot hold a {size}^3 patch"
        )));
    }
    let corners = foreground_corners(vol, size);
    if corners.is_empty() {
        return Err(Error::NoForeground);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let corner = corners[rng.random_range(0..corners.len())];
        let [i, j, k] = corner;
        let data = vol
            .channels
            .slice(s![.., i..i + size, j..j + size, k..k + size])
            .to_owned();
        out.push(SourcePatch {
            data,
            corner,
            subject: subject.to_string(),
        });
    }
    Ok(out)
}

/// Crop the central `round(10*s)`^3 block and produce the LR/HR pair.
pub fn make_training_pair(
    patch: &ArrayView4<f32>,
    source_id: &str,
    corner: [usize; 3],
    scale: ScaleFactor,
) -> Result<MultiChannelPatchPair> {
    let (c, p, p1, p2) = patch.dim();
    if c != 2 || p != p1 || p != p2 {
        return Err(Error::ShapeMismatch(format!(
            "source patch must be (2, P, P, P), got ({c}, {p}, {p1}, {p2})"
        )));
    }
    if !scale.in_training_range() {
        return Err(Error::ScaleOutOfRange(scale.0));
    }
    let hr_len = scale.hr_len();
    if hr_len > p {
        return Err(Error::VolumeTooSmall(format!(
            "HR crop {hr_len}^3 exceeds source patch {p}^3"
        )));
    }
    let start = (p - hr_len) / 2;
    let end = start + hr_len;

    let hr = patch
        .slice(s![0, start..end, start..end, start..end])
        .to_owned();
    let mut lr = Array4::<f32>::zeros((2, LR_PATCH, LR_PATCH, LR_PATCH));
    for ch in 0..2 {
        let crop = patch.slice(s![ch, start..end, start..end, start..end]);
        let down = resample3(&crop, [LR_PATCH; 3], Interp::Tricubic);
        lr.index_axis_mut(Axis(0), ch).assign(&down);
    }
    Ok(MultiChannelPatchPair {
        lr,
        hr,
        scale,
        source_id: source_id.to_string(),
        corner,
    })
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub dwi_path: PathBuf,
    pub t1_path: PathBuf,
    pub split: Split,
}

/// Subject-level dataset split; each subject appears in exactly one entry.
#[derive(Clone, Debug, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.subject_id,
                e.dwi_path.display(),
                e.t1_path.display(),
                e.split.as_str()
            ));
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<DatasetManifest> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::ManifestFormat {
                    line: lineno + 1,
                    reason: format!(
                        "expected 4 tab-separated fields, got {}: {line}",
                        fields.len()
                    ),
                });
            }
            let split = Split::parse(fields[3]).ok_or_else(|| Error::ManifestFormat {
                line: lineno + 1,
                reason: format!("unknown split '{}' (train|val|test): {line}", fields[3]),
            })?;
            if !seen.insert(fields[0].to_string()) {
                return Err(Error::ManifestFormat {
                    line: lineno + 1,
                    reason: format!("subject '{}' listed twice", fields[0]),
                });
            }
            entries.push(ManifestEntry {
                subject_id: fields[0].to_string(),
                dwi_path: PathBuf::from(fields[1]),
                t1_path: PathBuf::from(fields[2]),
                split,
            });
        }
        Ok(DatasetManifest { entries })
    }
}

/// Build a manifest by scanning `root` for subject directories that hold
/// `dwi.nii[.gz]` and `t1.nii[.gz]`, splitting subjects deterministically.
pub fn build_manifest(
    root: &Path,
    split_counts: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetManifest> {
    let mut subjects: Vec<(String, PathBuf, PathBuf)> = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let find = |stem: &str| -> Option<PathBuf> {
            for name in [format!("{stem}.nii.gz"), format!("{stem}.nii")] {
                let p = dir.join(&name);
                if p.exists() {
                    return Some(p);
                }
            }
            None
        };
        if let (Some(dwi), Some(t1)) = (find("dwi"), find("t1")) {
            let id = dir.file_name().unwrap().to_string_lossy().into_owned();
            subjects.push((id, dwi, t1));
        }
    }
    let (n_train, n_val, n_test) = split_counts;
    let needed = n_train + n_val + n_test;
    if subjects.len() < needed {
        return Err(Error::InsufficientSubjects {
            needed,
            found: subjects.len(),
        });
    }

    // Deterministic subject-level shuffle, then contiguous assignment.
    let mut rng = crate::rng::substream(seed, "split");
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut entries = Vec::with_capacity(needed);
    for (rank, &idx) in order.iter().take(needed).enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        let (id, dwi, t1) = subjects[idx].clone();
        entries.push(ManifestEntry {
            subject_id: id,
            dwi_path: dwi,
            t1_path: t1,
            split,
        });
    }
    entries.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(DatasetManifest { entries })
}

// ---------------------------------------------------------------------------
// Prepared-patch cache: one file per volume, float32 payload
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 8] = b"CSRPATCH";
const CACHE_VERSION: u32 = 1;

pub fn write_patch_cache(
    path: &Path,
    subject: &str,
    seed: u64,
    patches: &[SourcePatch],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let id = subject.as_bytes();
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&seed.to_le_bytes());
    let size = patches
        .first()
        .map(|p| p.data.dim().1)
        .unwrap_or(SOURCE_PATCH);
    buf.extend_from_slice(&(patches.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(size as u32).to_le_bytes());
    buf.extend_from_slice(&2u32.to_le_bytes());
    for p in patches {
        for &c in &p.corner {
            buf.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for v in p.data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_patch_cache(path: &Path) -> Result<Vec<SourcePatch>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bad = |reason: &str| Error::CacheFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(bad("truncated cache file"));
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };
    if take(8)? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let subject =
        String::from_utf8(take(id_len)?.to_vec()).map_err(|_| bad("subject id not UTF-8"))?;
    let _seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let size = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let channels = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if channels != 2 {
        return Err(bad(&format!("expected 2 channels, got {channels}")));
    }
    let voxels = 2 * size * size * size;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut corner = [0usize; 3];
        for c in corner.iter_mut() {
            *c = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let raw = take(voxels * 4)?;
        let mut data = Vec::with_capacity(voxels);
        for ch in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(ch.try_into().unwrap()));
        }
        let data = Array4::from_shape_vec((2, size, size, size), data).map_err(|_| bad("shape"))?;
        out.push(SourcePatch {
            data,
            corner,
            subject: subject.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use ndarray::Array4 as A4;

    fn toy_volume(n: usize, fill: impl Fn(usize, usize, usize) -> f32) -> MultiChannelVolume {
        let mut channels = A4::<f32>::zeros((2, n, n, n));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    channels[[0, i, j, k]] = fill(i, j, k);
                    channels[[1, i, j, k]] = 0.5 * fill(i, j, k) + 0.1;
                }
            }
        }
        MultiChannelVolume {
            channels,
            spacing_mm: [1.25; 3],
        }
    }

    #[test]
    fn nine_patches_of_the_right_shape() {
        let vol = toy_volume(64, |i, j, k| ((i + j + k) as f32 * 0.11).sin().abs() + 0.01);
        let mut rng = substream(3, "prepare");
        let patches = extract_patches(&vol, 9, 40, "s1", &mut rng).unwrap();
        assert_eq!(patches.len(), 9);
        for p in &patches {
            assert_eq!(p.data.dim(), (2, 40, 40, 40));
            assert!(p.corner.iter().all(|&c| c <= 24));
        }
    }

    #[test]
    fn same_seed_gives_identical_corners() {
        let vol = toy_volume(48, |i, _, _| (i as f32 * 0.2).cos().abs() + 0.05);
        let a = extract_patches(&vol, 9, 40, "s", &mut substream(7, "prepare")).unwrap();
        let b = extract_patches(&vol, 9, 40, "s", &mut substream(7, "prepare")).unwrap();
        let ca: Vec<_> = a.iter().map(|p| p.corner).collect();
        let cb: Vec<_> = b.iter().map(|p| p.corner).collect();
        assert_eq!(ca, cb);
    }

    #[test]
    fn all_zero_volume_has_no_foreground() {
        let vol = toy_volume(44, |_, _, _| 0.0);
        let err = extract_patches(&vol, 9, 40, "s", &mut substream(1, "p")).unwrap_err();
        assert!(matches!(err, Error::NoForeground));
    }

    #[test]
    fn undersized_volume_is_rejected() {
        let vol = toy_volume(30, |_, _, _| 1.0);
        let err = extract_patches(&vol, 9, 40, "s", &mut substream(1, "p")).unwrap_err();
        assert!(matches!(err, Error::VolumeTooSmall(_)));
    }

    #[test]
    fn foreground_rule_excludes_sparse_windows() {
        // Nonzero only in a 2-voxel slab: 2*1600 = 3200 < 10% of 64000.
        let vol = toy_volume(44, |i, _, _| if i < 2 { 1.0 } else { 0.0 });
        assert!(foreground_corners(&vol, 40).is_empty());
        // An 8-voxel slab gives 12800 >= 6400 for windows touching it fully.
        let vol2 = toy_volume(44, |i, _, _| if i < 8 { 1.0 } else { 0.0 });
        let corners2 = foreground_corners(&vol2, 40);
        assert!(corners2.contains(&[0, 0, 0]));
        assert!(corners2.contains(&[4, 0, 0])); // 4*1600 = 6400, exactly at threshold
    }

    #[test]
    fn scale_draws_stay_in_range_and_replay() {
        let mut rng = substream(11, "train");
        for _ in 0..1000 {
            let s = sample_scale(&mut rng);
            assert!((2.0..=3.0).contains(&s.0));
        }
        let a: Vec<f64> = {
            let mut r = substream(5, "x");
            (0..8).map(|_| sample_scale(&mut r).0).collect()
        };
        let b: Vec<f64> = {
            let mut r = substream(5, "x");
            (0..8).map(|_| sample_scale(&mut r).0).collect()
        };
        assert_eq!(a, b);
    }

    fn source_patch() -> SourcePatch {
        let mut data = A4::<f32>::zeros((2, 40, 40, 40));
        for ((c, i, j, k), v) in data.indexed_iter_mut() {
            let t = (i as f32 * 0.31).sin() * (j as f32 * 0.17).cos() + (k as f32 * 0.23).sin();
            *v = if c == 0 { 0.5 + 0.2 * t } else { 0.4 - 0.1 * t };
        }
        SourcePatch {
            data,
            corner: [3, 4, 5],
            subject: "s0".into(),
        }
    }

    #[test]
    fn pair_shapes_follow_the_rounding_rule() {
        let p = source_patch();
        for (s, want) in [(2.0, 20usize), (3.0, 30), (2.4, 24), (2.45, 25)] {
            let pair =
                make_training_pair(&p.data.view(), &p.subject, p.corner, ScaleFactor(s)).unwrap();
            assert_eq!(pair.hr.dim(), (want, want, want), "s={s}");
            assert_eq!(pair.lr.dim(), (2, 10, 10, 10));
        }
    }

    #[test]
    fn hr_is_the_central_crop_bit_for_bit() {
        let p = source_patch();
        let pair = make_training_pair(&p.data.view(), "s", p.corner, ScaleFactor(2.0)).unwrap();
        let start = (40 - 20) / 2;
        let crop = p
            .data
            .slice(s![0, start..start + 20, start..start + 20, start..start + 20]);
        assert_eq!(pair.hr, crop.to_owned());
    }

    #[test]
    fn lr_dwi_channel_is_the_degraded_hr() {
        let p = source_patch();
        let pair = make_training_pair(&p.data.view(), "s", p.corner, ScaleFactor(2.7)).unwrap();
        let down = resample3(&pair.hr.view(), [10, 10, 10], Interp::Tricubic);
        assert_eq!(pair.lr.index_axis(Axis(0), 0).to_owned(), down);
    }

    #[test]
    fn pair_construction_is_deterministic() {
        let p = source_patch();
        let a = make_training_pair(&p.data.view(), "s", p.corner, ScaleFactor(2.31)).unwrap();
        let b = make_training_pair(&p.data.view(), "s", p.corner, ScaleFactor(2.31)).unwrap();
        assert_eq!(a.lr, b.lr);
        assert_eq!(a.hr, b.hr);
    }

    #[test]
    fn out_of_range_scale_is_rejected() {
        let p = source_patch();
        for s in [1.5, 3.5] {
            assert!(matches!(
                make_training_pair(&p.data.view(), "s", p.corner, ScaleFactor(s)),
                Err(Error::ScaleOutOfRange(_))
            ));
        }
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let manifest = DatasetManifest {
            entries: vec![
                ManifestEntry {
                    subject_id: "a".into(),
                    dwi_path: "/d/a_dwi.nii".into(),
                    t1_path: "/d/a_t1.nii".into(),
                    split: Split::Train,
                },
                ManifestEntry {
                    subject_id: "b".into(),
                    dwi_path: "/d/b_dwi.nii".into(),
                    t1_path: "/d/b_t1.nii".into(),
                    split: Split::Test,
                },
            ],
        };
        manifest.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.entries[1].split, Split::Test);

        std::fs::write(&path, "only\ttwo\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path),
            Err(Error::ManifestFormat { line: 1, .. })
        ));
    }

    #[test]
    fn build_manifest_splits_disjointly() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..6 {
            let sub = dir.path().join(format!("sub{i}"));
            std::fs::create_dir(&sub).unwrap();
            std::fs::write(sub.join("dwi.nii"), b"x").unwrap();
            std::fs::write(sub.join("t1.nii"), b"x").unwrap();
        }
        let m = build_manifest(dir.path(), (3, 1, 2), 9).unwrap();
        assert_eq!(m.split(Split::Train).count(), 3);
        assert_eq!(m.split(Split::Val).count(), 1);
        assert_eq!(m.split(Split::Test).count(), 2);
        let ids: std::collections::HashSet<_> =
            m.entries.iter().map(|e| e.subject_id.clone()).collect();
        assert_eq!(ids.len(), 6);
        // Deterministic under the same seed.
        let m2 = build_manifest(dir.path(), (3, 1, 2), 9).unwrap();
        for (a, b) in m.entries.iter().zip(m2.entries.iter()) {
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.split, b.split);
        }

        assert!(matches!(
            build_manifest(dir.path(), (70, 10, 20), 9),
            Err(Error::InsufficientSubjects { .. })
        ));
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s0.patches");
        let patches = vec![source_patch(), source_patch()];
        write_patch_cache(&path, "s0", 42, &patches).unwrap();
        let back = read_patch_cache(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].corner, [3, 4, 5]);
        assert_eq!(back[0].data, patches[0].data);
        assert_eq!(back[0].subject, "s0");
    }
}
