//! Typed configuration. Text parsing and dumping live in [`crate::cli::config`].

use crate::error::{Error, Result};

/// Network dimensions for the desk-scale models.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDims {
    /// Output side length; must be `4 · 2^k`.
    pub resolution: usize,
    pub z_dim: usize,
    pub w_dim: usize,
    /// Generator channel width at every resolution.
    pub channels: usize,
    /// Channels per appearance half (C_a).
    pub appearance_channels: usize,
    /// Spatial side of the appearance code (s).
    pub appearance_size: usize,
    /// Hidden dimension D of the factorized weight mapper.
    pub hidden_dim: usize,
    /// Width F of the feature-transformer output vector.
    pub feature_dim: usize,
}

impl Default for ToyDims {
    fn default() -> Self {
        ToyDims {
            resolution: 32,
            z_dim: 64,
            w_dim: 64,
            channels: 32,
            appearance_channels: 32,
            appearance_size: 4,
            hidden_dim: 64,
            feature_dim: 64,
        }
    }
}

impl ToyDims {
    /// Number of synthesis blocks (4, 8, 16, ... up to the resolution).
    pub fn blocks(&self) -> usize {
        (self.resolution / 4).trailing_zeros() as usize + 1
    }

    /// Number of generator convolution layers N (= style layers L).
    pub fn num_layers(&self) -> usize {
        2 * self.blocks()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 4 || r % 4 != 0 || !(r / 4).is_power_of_two() {
            return Err(Error::Config(format!("toy.resolution must be 4*2^k, got {r}")));
        }
        let s = self.appearance_size;
        if s == 0 || !s.is_power_of_two() || s > r / 2 {
            return Err(Error::Config(format!(
                "toy.appearance_size must be a power of two <= {}",
                r / 2
            )));
        }
        for (name, v) in [
            ("toy.z_dim", self.z_dim),
            ("toy.w_dim", self.w_dim),
            ("toy.channels", self.channels),
            ("toy.appearance_channels", self.appearance_channels),
            ("hyper.D", self.hidden_dim),
            ("hyper.F", self.feature_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Loss weights. `r1_gamma` is the gradient-penalty coefficient; the editing
/// magnitude is a separate key.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_pixel: f64,
    pub lambda_perc: f64,
    pub lambda_id: f64,
    pub lambda_adv: f64,
    pub r1_gamma: f64,
    /// Seed of the frozen random feature network standing in for the
    /// perceptual and identity extractors.
    pub proxy_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Profile::FacesAnalog.loss()
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss.lambda_pixel", self.lambda_pixel),
            ("loss.lambda_perc", self.lambda_perc),
            ("loss.lambda_id", self.lambda_id),
            ("loss.lambda_adv", self.lambda_adv),
            ("loss.r1_gamma", self.r1_gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Named hyperparameter sets for the two image domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    FacesAnalog,
    ChurchAnalog,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::FacesAnalog => "faces-analog",
            Profile::ChurchAnalog => "church-analog",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "faces-analog" => Ok(Profile::FacesAnalog),
            "church-analog" => Ok(Profile::ChurchAnalog),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn loss(self) -> LossConfig {
        let (lambda_id, lambda_adv, r1_gamma) = match self {
            Profile::FacesAnalog => (0.1, 0.005, 10.0),
            Profile::ChurchAnalog => (0.5, 0.15, 100.0),
        };
        LossConfig {
            lambda_pixel: 1.0,
            lambda_perc: 0.8,
            lambda_id,
            lambda_adv,
            r1_gamma,
            proxy_seed: 0x5eed,
        }
    }
}

/// How the appearance code is formed from the two encoder outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fusion {
    /// Features of x and of the Phase-I reconstruction, concatenated.
    Fused,
    /// Features of x only (ablation); the second half is a copy of the first.
    InputOnly,
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Fused => "fused",
            Fusion::InputOnly => "x-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Fusion::Fused),
            "x-only" => Ok(Fusion::InputOnly),
            other => Err(Error::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    /// Targets sampled from the frozen generator itself.
    SelfInversion,
    /// Procedural shape images.
    Shapes,
}

impl DataMode {
    pub fn name(self) -> &'static str {
        match self {
            DataMode::SelfInversion => "self-inversion",
            DataMode::Shapes => "shapes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "self-inversion" => Ok(DataMode::SelfInversion),
            "shapes" => Ok(DataMode::Shapes),
            other => Err(Error::Config(format!("unknown data mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub mode: DataMode,
    pub seed: u64,
    pub train_size: usize,
    pub heldout_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            mode: DataMode::SelfInversion,
            seed: 1,
            train_size: 256,
            heldout_size: 64,
        }
    }
}

/// Every hyperparameter of every command.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub profile: Profile,
    pub seed: u64,
    pub lr: f64,
    pub batch_size_warm: usize,
    pub batch_size_adv: usize,
    pub warmup_iters: u64,
    pub total_iters: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub loss: LossConfig,
    pub dims: ToyDims,
    pub fusion: Fusion,
    pub data: DataConfig,
    pub pretrain_iters: u64,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub edit_gamma: f64,
    pub bench_latent_steps: usize,
    pub bench_latent_lr: f64,
    pub bench_finetune_steps: usize,
    pub bench_finetune_lr: f64,
    pub ms_ssim_scales: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub directions_k: usize,
    pub directions_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            profile: Profile::FacesAnalog,
            seed: 0,
            lr: 1e-4,
            batch_size_warm: 8,
            batch_size_adv: 4,
            warmup_iters: 2_000,
            total_iters: 20_000,
            log_every: 500,
            checkpoint_every: 5_000,
            loss: LossConfig::default(),
            dims: ToyDims::default(),
            fusion: Fusion::Fused,
            data: DataConfig::default(),
            pretrain_iters: 3_000,
            pretrain_batch: 8,
            pretrain_lr: 2e-3,
            edit_gamma: 3.0,
            bench_latent_steps: 200,
            bench_latent_lr: 0.01,
            bench_finetune_steps: 50,
            bench_finetune_lr: 1e-3,
            ms_ssim_scales: 3,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
            directions_k: 8,
            directions_samples: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn with_profile(profile: Profile) -> Self {
        TrainConfig {
            profile,
            loss: profile.loss(),
            ..TrainConfig::default()
        }
    }

    /// A 16×16 setup that trains end to end in seconds, for examples and
    /// smoke tests.
    pub fn tiny() -> Self {
        TrainConfig {
            warmup_iters: 20,
            total_iters: 60,
            log_every: 20,
            checkpoint_every: 30,
            dims: ToyDims {
                resolution: 16,
                z_dim: 8,
                w_dim: 8,
                channels: 8,
                appearance_channels: 4,
                appearance_size: 2,
                hidden_dim: 8,
                feature_dim: 8,
            },
            data: DataConfig {
                train_size: 32,
                heldout_size: 8,
                ..DataConfig::default()
            },
            pretrain_iters: 30,
            bench_latent_steps: 20,
            bench_finetune_steps: 5,
            ms_ssim_scales: 2,
            directions_samples: 1000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.loss.validate()?;
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.warmup_iters > self.total_iters {
            return Err(Error::Config(format!(
                "train.warmup_iters ({}) exceeds train.total_iters ({})",
                self.warmup_iters, self.total_iters
            )));
        }
        if self.batch_size_warm == 0 || self.batch_size_adv == 0 || self.pretrain_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.data.train_size == 0 {
            return Err(Error::Config("data.train_size must be positive".into()));
        }
        if self.ms_ssim_scales == 0 || self.dims.resolution >> (self.ms_ssim_scales - 1) < 4 {
            return Err(Error::Config(
                "metrics.ms_ssim_scales too large for the resolution".into(),
            ));
        }
        Ok(())
    }
}
