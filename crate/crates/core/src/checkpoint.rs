//! Single-file checkpoint archive.
//!
//! Layout: magic + format version, the canonical config snapshot as text,
//! training counters, the training RNG position, validation history, then
//! named little-endian f32 tensors (network parameters followed by Adam
//! moments, in parameter-visit order). Files are written to a temp path
//! and renamed so an interrupted save never corrupts an existing
//! checkpoint.

use crate::config::RunConfig;
use crate::decoder::{self, DecoderParams};
use crate::encoder::{self, EncoderParams};
use crate::error::{Error, Result};
use crate::nn::adam::{AdamHyper, AdamState};
use crate::nn::Parameters;
use crate::rng::RngState;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"CSRVCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub epoch: u64,
    pub val_psnr: f64,
    pub val_ssim: f64,
}

/// Full training state: everything needed to resume bit-exactly or to run
/// inference.
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: u64,
    pub step: u64,
    pub rng_state: RngState,
    /// NaN until the first validation pass.
    pub best_val_psnr: f64,
    pub history: Vec<HistoryEntry>,
    pub encoder: EncoderParams<f32>,
    pub decoder: DecoderParams<f32>,
    pub adam: AdamState,
    pub adam_hyper: AdamHyper,
}

impl Checkpoint {
    /// Fresh state at epoch 0 with seed-deterministic initialization.
    pub fn init(config: &RunConfig) -> Result<Checkpoint> {
        let enc = encoder::init_params::<f32>(&config.encoder, config.seed)?;
        let dec = decoder::init_params::<f32>(&config.decoder, config.seed)?;
        let mut sizes = enc.tensor_sizes();
        sizes.extend(dec.tensor_sizes());
        let train_rng = crate::rng::substream(config.seed, "train");
        Ok(Checkpoint {
            config: config.clone(),
            epoch: 0,
            step: 0,
            rng_state: crate::rng::save_state(&train_rng),
            best_val_psnr: f64::NAN,
            history: Vec::new(),
            encoder: enc,
            decoder: dec,
            adam: AdamState::new(&sizes),
            adam_hyper: AdamHyper::default(),
        })
    }

    /// Names and shapes of every parameter tensor (encoder then decoder).
    pub fn parameter_manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut m = self.encoder.manifest();
        m.extend(self.decoder.manifest());
        m
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let text = self.config.to_text();
        buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
        buf.extend_from_slice(text.as_bytes());
        buf.extend_from_slice(&self.epoch.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&self.rng_state.0);
        buf.extend_from_slice(&self.rng_state.1.to_le_bytes());
        buf.extend_from_slice(&self.best_val_psnr.to_le_bytes());
        buf.extend_from_slice(&self.adam.step.to_le_bytes());
        buf.extend_from_slice(&self.adam_hyper.beta1.to_le_bytes());
        buf.extend_from_slice(&self.adam_hyper.beta2.to_le_bytes());
        buf.extend_from_slice(&self.adam_hyper.eps.to_le_bytes());
        buf.extend_from_slice(&(self.history.len() as u32).to_le_bytes());
        for h in &self.history {
            buf.extend_from_slice(&h.epoch.to_le_bytes());
            buf.extend_from_slice(&h.val_psnr.to_le_bytes());
            buf.extend_from_slice(&h.val_ssim.to_le_bytes());
        }

        let names = param_names(&self.encoder, &self.decoder);
        let count = 3 * names.len();
        buf.extend_from_slice(&(count as u32).to_le_bytes());
        let mut write_tensor = |name: &str, shape: &[usize], data: &[f32]| {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(0u8); // dtype f32
            buf.push(shape.len() as u8);
            for &d in shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        };
        self.encoder
            .visit(&mut |name, shape, data| write_tensor(name, shape, data));
        self.decoder
            .visit(&mut |name, shape, data| write_tensor(name, shape, data));
        for (i, name) in names.iter().enumerate() {
            write_tensor(&format!("adam.m.{name}"), &[self.adam.m[i].len()], &self.adam.m[i]);
            write_tensor(&format!("adam.v.{name}"), &[self.adam.v[i].len()], &self.adam.v[i]);
        }

        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let bad = |reason: String| Error::CheckpointFormat {
            path: path.to_path_buf(),
            reason,
        };
        let mut at = 0usize;
        macro_rules! take {
            ($n:expr) => {{
                let n = $n;
                if at + n > bytes.len() {
                    return Err(bad("truncated checkpoint".into()));
                }
                let s = &bytes[at..at + n];
                at += n;
                s
            }};
        }
        macro_rules! read_u32 {
            () => {
                u32::from_le_bytes(take!(4).try_into().unwrap())
            };
        }
        macro_rules! read_u64 {
            () => {
                u64::from_le_bytes(take!(8).try_into().unwrap())
            };
        }
        macro_rules! read_f64 {
            () => {
                f64::from_le_bytes(take!(8).try_into().unwrap())
            };
        }

        if take!(8) != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = read_u32!();
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let text_len = read_u32!() as usize;
        let text = String::from_utf8(take!(text_len).to_vec())
            .map_err(|_| bad("config snapshot is not UTF-8".into()))?;
        let config = RunConfig::from_text(&text)?;
        let epoch = read_u64!();
        let step = read_u64!();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(take!(32));
        let word_pos = u128::from_le_bytes(take!(16).try_into().unwrap());
        let best_val_psnr = read_f64!();
        let adam_step = read_u64!();
        let adam_hyper = AdamHyper {
            beta1: read_f64!(),
            beta2: read_f64!(),
            eps: read_f64!(),
        };
        let hist_len = read_u32!() as usize;
        let mut history = Vec::with_capacity(hist_len);
        for _ in 0..hist_len {
            history.push(HistoryEntry {
                epoch: read_u64!(),
                val_psnr: read_f64!(),
                val_ssim: read_f64!(),
            });
        }

        let mut encoder = EncoderParams::<f32>::zeros(&config.encoder)?;
        let mut decoder = DecoderParams::<f32>::zeros(&config.decoder)?;
        let names = param_names(&encoder, &decoder);
        let mut sizes = encoder.tensor_sizes();
        sizes.extend(decoder.tensor_sizes());
        let mut adam = AdamState::new(&sizes);
        adam.step = adam_step;

        let tensor_count = read_u32!() as usize;
        if tensor_count != 3 * names.len() {
            return Err(Error::CheckpointIncompatible(format!(
                "archive holds {tensor_count} tensors, the configured networks need {}",
                3 * names.len()
            )));
        }
        // Expected traversal: parameters, then per-name Adam moments.
        let mut expected: Vec<String> = names.clone();
        for name in &names {
            expected.push(format!("adam.m.{name}"));
            expected.push(format!("adam.v.{name}"));
        }
        // Reorder: saver interleaves adam m/v per name after the params.
        let mut expected_iter: Vec<String> = names.clone();
        for name in &names {
            expected_iter.push(format!("adam.m.{name}"));
            expected_iter.push(format!("adam.v.{name}"));
        }
        let _ = expected;

        let mut payloads: Vec<Vec<f32>> = Vec::with_capacity(tensor_count);
        for want_name in &expected_iter {
            let name_len = read_u32!() as usize;
            let name = String::from_utf8(take!(name_len).to_vec())
                .map_err(|_| bad("tensor name is not UTF-8".into()))?;
            if &name != want_name {
                return Err(Error::CheckpointIncompatible(format!(
                    "tensor '{name}' where '{want_name}' was expected (architecture mismatch)"
                )));
            }
            let dtype = take!(1)[0];
            if dtype != 0 {
                return Err(bad(format!("tensor '{name}': unsupported dtype {dtype}")));
            }
            let ndim = take!(1)[0] as usize;
            let mut len = 1usize;
            for _ in 0..ndim {
                len *= read_u64!() as usize;
            }
            let raw = take!(len * 4);
            let mut data = Vec::with_capacity(len);
            for ch in raw.chunks_exact(4) {
                data.push(f32::from_le_bytes(ch.try_into().unwrap()));
            }
            payloads.push(data);
        }

        let mut it = payloads.into_iter();
        let mut fill = |params: &mut dyn Parameters<f32>| -> Result<()> {
            let mut err = None;
            params.visit_mut(&mut |name, dst| {
                if err.is_some() {
                    return;
                }
                let src = it.next().unwrap();
                if src.len() != dst.len() {
                    err = Some(Error::CheckpointIncompatible(format!(
                        "tensor '{name}': {} values stored, {} expected",
                        src.len(),
                        dst.len()
                    )));
                    return;
                }
                dst.copy_from_slice(&src);
            });
            err.map_or(Ok(()), Err)
        };
        fill(&mut encoder)?;
        fill(&mut decoder)?;
        for i in 0..names.len() {
            let m = it.next().unwrap();
            let v = it.next().unwrap();
            if m.len() != adam.m[i].len() || v.len() != adam.v[i].len() {
                return Err(Error::CheckpointIncompatible(format!(
                    "optimizer state size mismatch for '{}'",
                    names[i]
                )));
            }
            adam.m[i] = m;
            adam.v[i] = v;
        }

        Ok(Checkpoint {
            config,
            epoch,
            step,
            rng_state: (seed, word_pos),
            best_val_psnr,
            history,
            encoder,
            decoder,
            adam,
            adam_hyper,
        })
    }

    /// Check that resuming under `current` config is sound: everything but
    /// the epoch budget and output directory must match the snapshot.
    pub fn check_resume_compatible(&self, current: &RunConfig) -> Result<()> {
        let normalize = |cfg: &RunConfig| {
            let mut c = cfg.clone();
            c.train_epochs = 0;
            c.train_out_dir = std::path::PathBuf::new();
            c.to_text()
        };
        if normalize(&self.config) != normalize(current) {
            return Err(Error::CheckpointIncompatible(
                "run config differs from the checkpoint snapshot (only train.epochs and train.out_dir may change on resume)"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn param_names(enc: &EncoderParams<f32>, dec: &DecoderParams<f32>) -> Vec<String> {
    let mut names: Vec<String> = enc.manifest().into_iter().map(|(n, _)| n).collect();
    names.extend(dec.manifest().into_iter().map(|(n, _)| n));
    names
}
