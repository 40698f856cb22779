//! `key = value` config files. `#` starts a comment; unknown keys are errors.
//! A `profile` line is applied before every other key regardless of where
//! it appears, so explicit `loss.*` values always win.

use std::str::FromStr;

use crate::config::{DataMode, Fusion, Profile, TrainConfig};
use crate::error::{Error, Result};

type Getter = fn(&TrainConfig) -> String;
type Setter = fn(&mut TrainConfig, &str) -> Result<()>;

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+ : $ty:ty),* $(,)?) => {
        &[$(
            (
                $key,
                (|c: &TrainConfig| c.$($field).+.to_string()) as Getter,
                (|c: &mut TrainConfig, v: &str| { c.$($field).+ = num::<$ty>($key, v)?; Ok(()) }) as Setter,
            ),
        )*]
    };
}

const NUMERIC: &[(&str, Getter, Setter)] = keys! {
    "seed" => seed: u64,
    "train.lr" => lr: f64,
    "train.batch_size_warm" => batch_size_warm: usize,
    "train.batch_size_adv" => batch_size_adv: usize,
    "train.warmup_iters" => warmup_iters: u64,
    "train.total_iters" => total_iters: u64,
    "train.log_every" => log_every: u64,
    "train.checkpoint_every" => checkpoint_every: u64,
    "loss.lambda_pixel" => loss.lambda_pixel: f64,
    "loss.lambda_perc" => loss.lambda_perc: f64,
    "loss.lambda_id" => loss.lambda_id: f64,
    "loss.lambda_adv" => loss.lambda_adv: f64,
    "loss.r1_gamma" => loss.r1_gamma: f64,
    "loss.proxy_seed" => loss.proxy_seed: u64,
    "toy.resolution" => dims.resolution: usize,
    "toy.z_dim" => dims.z_dim: usize,
    "toy.w_dim" => dims.w_dim: usize,
    "toy.channels" => dims.channels: usize,
    "toy.appearance_channels" => dims.appearance_channels: usize,
    "toy.appearance_size" => dims.appearance_size: usize,
    "hyper.D" => dims.hidden_dim: usize,
    "hyper.F" => dims.feature_dim: usize,
    "data.seed" => data.seed: u64,
    "data.train_size" => data.train_size: usize,
    "data.heldout_size" => data.heldout_size: usize,
    "pretrain.iters" => pretrain_iters: u64,
    "pretrain.batch" => pretrain_batch: usize,
    "pretrain.lr" => pretrain_lr: f64,
    "edit.gamma" => edit_gamma: f64,
    "bench.latent_steps" => bench_latent_steps: usize,
    "bench.latent_lr" => bench_latent_lr: f64,
    "bench.finetune_steps" => bench_finetune_steps: usize,
    "bench.finetune_lr" => bench_finetune_lr: f64,
    "metrics.ms_ssim_scales" => ms_ssim_scales: usize,
    "metrics.ssim_c1" => ssim_c1: f64,
    "metrics.ssim_c2" => ssim_c2: f64,
    "directions.k" => directions_k: usize,
    "directions.samples" => directions_samples: usize,
};

fn set_named(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "hyper.fusion" => cfg.fusion = Fusion::parse(value)?,
        "data.mode" => cfg.data.mode = DataMode::parse(value)?,
        _ => {
            let (_, _, set) = NUMERIC
                .iter()
                .find(|(k, _, _)| *k == key)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            set(cfg, value)?;
        }
    }
    Ok(())
}

fn split_line(line: &str, lineno: usize) -> Result<Option<(&str, &str)>> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
    Ok(Some((k.trim(), v.trim())))
}

/// Applies `text` on top of `base`.
pub fn apply(base: &TrainConfig, text: &str) -> Result<TrainConfig> {
    let mut pairs = Vec::new();
    let mut profile = None;
    for (i, line) in text.lines().enumerate() {
        if let Some((k, v)) = split_line(line, i + 1)? {
            if k == "profile" {
                profile = Some(Profile::parse(v)?);
            } else {
                pairs.push((k, v));
            }
        }
    }
    let mut cfg = base.clone();
    if let Some(p) = profile {
        cfg.profile = p;
        cfg.loss = crate::config::LossConfig {
            proxy_seed: cfg.loss.proxy_seed,
            ..p.loss()
        };
    }
    for (k, v) in pairs {
        set_named(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<TrainConfig> {
    apply(&TrainConfig::default(), text)
}

/// Applies `key=value` overrides (e.g. from `--set` flags).
pub fn apply_overrides(base: &TrainConfig, overrides: &[String]) -> Result<TrainConfig> {
    apply(base, &overrides.join("\n"))
}

/// Every key with its current value, one per line, `profile` first.
pub fn dump(cfg: &TrainConfig) -> String {
    let mut out = format!("profile = {}\n", cfg.profile.name());
    for (key, get, _) in NUMERIC {
        out.push_str(&format!("{key} = {}\n", get(cfg)));
        if *key == "hyper.F" {
            out.push_str(&format!("hyper.fusion = {}\n", cfg.fusion.name()));
        }
        if *key == "data.seed" {
            out.push_str(&format!("data.mode = {}\n", cfg.data.mode.name()));
        }
    }
    out
}
