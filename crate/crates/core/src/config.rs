//! Flat-key run configuration.
//!
//! One canonical text format everywhere: `key = value` lines with dotted
//! keys, `#` comments. Unknown keys are a hard error so typos cannot
//! silently fall back to defaults. Every run writes its fully resolved
//! config next to its outputs, and the same text is embedded in
//! checkpoints as the config snapshot.

use crate::decoder::DecoderConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_manifest: PathBuf,
    pub data_cache_dir: PathBuf,
    pub prepare_patches_per_volume: usize,
    pub prepare_patch_size: usize,
    pub train_lr0: f64,
    pub train_batch_size: usize,
    pub train_epochs: usize,
    pub train_lr_decay_every: usize,
    pub train_lr_decay_factor: f64,
    pub train_lambda_k: f64,
    pub train_use_t1: bool,
    pub train_use_freq_loss: bool,
    pub train_scale_min: f64,
    pub train_scale_max: f64,
    pub train_val_every: usize,
    pub train_val_scale: f64,
    pub train_redraw_patches: bool,
    pub train_out_dir: PathBuf,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub infer_tile_size: usize,
    pub infer_tile_overlap: usize,
    pub infer_query_chunk: usize,
    pub eval_scales: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data_manifest: PathBuf::from("manifest.tsv"),
            data_cache_dir: PathBuf::new(),
            prepare_patches_per_volume: 9,
            prepare_patch_size: 40,
            train_lr0: 1e-4,
            train_batch_size: 9,
            train_epochs: 1000,
            train_lr_decay_every: 200,
            train_lr_decay_factor: 0.5,
            train_lambda_k: 0.01,
            train_use_t1: true,
            train_use_freq_loss: true,
            train_scale_min: 2.0,
            train_scale_max: 3.0,
            train_val_every: 10,
            train_val_scale: 2.0,
            train_redraw_patches: false,
            train_out_dir: PathBuf::from("runs/default"),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            infer_tile_size: 40,
            infer_tile_overlap: 8,
            infer_query_chunk: 65536,
            eval_scales: vec![2.0, 3.0, 4.0, 2.4],
        }
    }
}

fn fmt_scales(scales: &[f64]) -> String {
    scales
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_scales(value: &str) -> Result<Vec<f64>> {
    let scales: std::result::Result<Vec<f64>, _> =
        value.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let scales = scales.map_err(|_| Error::Config(format!("bad scale list '{value}'")))?;
    if scales.is_empty() {
        return Err(Error::Config("scale list is empty".into()));
    }
    Ok(scales)
}

macro_rules! config_keys {
    ($($key:literal => $field:ident : $kind:tt, $doc:literal;)*) => {
        /// Every config key with its documentation, in canonical order.
        pub const KEY_DOCS: &[(&str, &str)] = &[ $(($key, $doc)),* ];

        impl RunConfig {
            /// Set one key from its text form. Unknown keys are an error.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let parse_err = |what: &str| {
                    Error::Config(format!("key '{key}': cannot parse '{value}' as {what}"))
                };
                match key {
                    $($key => { config_keys!(@set self, $field, $kind, value, parse_err); })*
                    _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
                }
                Ok(())
            }

            /// Canonical text form: every key, fixed order, one per line.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{} = {}\n", $key, config_keys!(@get self, $field, $kind)));)*
                out
            }
        }
    };
    (@set $self:ident, $field:ident, u64, $value:ident, $err:ident) => {
        $self.$field = $value.parse().map_err(|_| $err("an integer"))?
    };
    (@set $self:ident, $field:ident, usize, $value:ident, $err:ident) => {
        $self.$field = $value.parse().map_err(|_| $err("an integer"))?
    };
    (@set $self:ident, $field:ident, f64, $value:ident, $err:ident) => {
        $self.$field = $value.parse().map_err(|_| $err("a number"))?
    };
    (@set $self:ident, $field:ident, bool, $value:ident, $err:ident) => {
        $self.$field = match $value {
            "true" => true,
            "false" => false,
            _ => return Err($err("true|false")),
        }
    };
    (@set $self:ident, $field:ident, path, $value:ident, $err:ident) => {
        $self.$field = PathBuf::from($value)
    };
    (@set $self:ident, $field:ident, scales, $value:ident, $err:ident) => {
        $self.$field = parse_scales($value)?
    };
    (@set $self:ident, $field:ident, (enc $sub:ident), $value:ident, $err:ident) => {
        $self.encoder.$sub = $value.parse().map_err(|_| $err("an integer"))?
    };
    (@set $self:ident, $field:ident, (dec $sub:ident), $value:ident, $err:ident) => {
        $self.decoder.$sub = $value.parse().map_err(|_| $err("an integer"))?
    };
    (@get $self:ident, $field:ident, path) => { $self.$field.display() };
    (@get $self:ident, $field:ident, scales) => { fmt_scales(&$self.$field) };
    (@get $self:ident, $field:ident, (enc $sub:ident)) => { $self.encoder.$sub };
    (@get $self:ident, $field:ident, (dec $sub:ident)) => { $self.decoder.$sub };
    (@get $self:ident, $field:ident, $kind:tt) => { $self.$field };
}

config_keys! {
    "seed" => seed: u64, "root seed; all randomness derives from it via named substreams";
    "data.manifest" => data_manifest: path, "dataset manifest (subject<TAB>dwi<TAB>t1<TAB>split)";
    "data.cache_dir" => data_cache_dir: path, "prepared patch cache root (empty: $CSRVOLSR_CACHE_DIR or ./cache)";
    "prepare.patches_per_volume" => prepare_patches_per_volume: usize, "source patches drawn per subject";
    "prepare.patch_size" => prepare_patch_size: usize, "source patch edge length";
    "train.lr0" => train_lr0: f64, "initial Adam learning rate";
    "train.batch_size" => train_batch_size: usize, "samples per optimization step";
    "train.epochs" => train_epochs: usize, "training epochs";
    "train.lr_decay_every" => train_lr_decay_every: usize, "epochs between learning-rate halvings";
    "train.lr_decay_factor" => train_lr_decay_factor: f64, "multiplier applied at each decay boundary";
    "train.lambda_k" => train_lambda_k: f64, "frequency-loss weight";
    "train.use_t1" => train_use_t1: bool, "feed the anatomical channel (false: zero-filled)";
    "train.use_freq_loss" => train_use_freq_loss: bool, "include the frequency-domain loss term";
    "train.scale_min" => train_scale_min: f64, "lower bound of the training scale distribution";
    "train.scale_max" => train_scale_max: f64, "upper bound of the training scale distribution";
    "train.val_every" => train_val_every: usize, "epochs between validation passes";
    "train.val_scale" => train_val_scale: f64, "scale used for validation PSNR/SSIM";
    "train.redraw_patches" => train_redraw_patches: bool, "redraw source patches every epoch instead of using the prepared cache";
    "train.out_dir" => train_out_dir: path, "run directory for checkpoints and logs";
    "encoder.num_blocks" => encoder_num_blocks: (enc num_blocks), "residual dense blocks (D)";
    "encoder.convs_per_block" => encoder_convs_per_block: (enc convs_per_block), "dense convs per block (C)";
    "encoder.growth" => encoder_growth: (enc growth), "growth channels per dense conv (G)";
    "encoder.base_channels" => encoder_base_channels: (enc base_channels), "shallow/fusion width (G0)";
    "encoder.in_channels" => encoder_in_channels: (enc in_channels), "input channels (2, or 1 for the strict no-T1 variant)";
    "decoder.num_layers" => decoder_num_layers: (dec num_layers), "fully connected layers (8 is paper-faithful)";
    "decoder.hidden_width" => decoder_hidden_width: (dec hidden_width), "hidden width (W)";
    "decoder.skip_at" => decoder_skip_at: (dec skip_at), "ReLU index the input skip joins (4 is paper-faithful)";
    "infer.tile_size" => infer_tile_size: usize, "LR tile edge for tiled inference";
    "infer.tile_overlap" => infer_tile_overlap: usize, "LR voxel overlap between tiles";
    "infer.query_chunk" => infer_query_chunk: usize, "decoder rows per chunk during inference";
    "eval.scales" => eval_scales: scales, "comma-separated evaluation scale factors";
}

impl RunConfig {
    /// Parse a canonical/partial config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value': {raw}", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        if !path.exists() {
            return Err(Error::Config(format!(
                "config file not found: {}",
                path.display()
            )));
        }
        RunConfig::from_text(&std::fs::read_to_string(path)?)
    }

    /// Apply `key=value` command-line overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{o}' is not of the form key=value"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Cache root: explicit config, else `$CSRVOLSR_CACHE_DIR`, else `./cache`.
    pub fn cache_dir(&self) -> PathBuf {
        if !self.data_cache_dir.as_os_str().is_empty() {
            return self.data_cache_dir.clone();
        }
        if let Ok(env) = std::env::var("CSRVOLSR_CACHE_DIR") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        PathBuf::from("cache")
    }

    /// Run directory, tagged by ablation toggles.
    pub fn run_dir(&self) -> PathBuf {
        let mut name = self
            .train_out_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        if !self.train_use_t1 {
            name.push_str("-noT1");
        }
        if !self.train_use_freq_loss {
            name.push_str("-noLk");
        }
        match self.train_out_dir.parent() {
            Some(parent) if !parent.as_os_str().is_empty() => parent.join(name),
            _ => PathBuf::from(name),
        }
    }
}
