use std::time::Instant;

use crate::config::{LossConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::inversion::metrics::{format_psnr, metrics, MetricSettings, MetricsRow};
use crate::inversion::Models;
use crate::losses::{rec_loss, ProxyFeatureNet};
use crate::synthgen::Generator;
use crate::tensor::{Adam, Graph, ParamStore, Tensor};

pub const BENCH_HEADER: &str = "strategy,l2,lpips_proxy,id_proxy,psnr,ms_ssim,seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// w = E₁(x), rendered through the frozen generator.
    Phase1Only,
    /// The two-phase encoder.
    Full,
    /// Gradient descent on w from the mean code.
    LatentOptimization,
    /// Gradient descent on the generator weights with w = E₁(x) fixed.
    PerImageFinetune,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Phase1Only,
        Strategy::Full,
        Strategy::LatentOptimization,
        Strategy::PerImageFinetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Phase1Only => "phase1-only",
            Strategy::Full => "full",
            Strategy::LatentOptimization => "latent-optimization",
            Strategy::PerImageFinetune => "per-image-finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSettings {
    pub latent_steps: usize,
    pub latent_lr: f64,
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub loss: LossConfig,
    pub metrics: MetricSettings,
    pub seed: u64,
}

impl BenchSettings {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        BenchSettings {
            latent_steps: cfg.bench_latent_steps,
            latent_lr: cfg.bench_latent_lr,
            finetune_steps: cfg.bench_finetune_steps,
            finetune_lr: cfg.bench_finetune_lr,
            loss: cfg.loss.clone(),
            metrics: MetricSettings::from_config(cfg),
            seed: cfg.seed,
        }
    }
}

/// Mean metrics of one strategy; `metrics.seconds` is wall-clock per image.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub metrics: MetricsRow,
    pub images: usize,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{}",
            self.strategy.name(),
            m.l2,
            m.lpips_proxy,
            m.id_proxy,
            format_psnr(m.psnr),
            m.ms_ssim,
            m.seconds
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Minimises the reconstruction loss of one image over `params` for
/// `steps` Adam steps. `render` builds G's output from the bound store.
fn optimise(
    params: &mut ParamStore,
    steps: usize,
    lr: f64,
    x: &Tensor,
    proxy: &ProxyFeatureNet,
    loss: &LossConfig,
    render: impl Fn(&mut Graph, &crate::tensor::Bound) -> Result<crate::tensor::NodeId>,
) -> Result<()> {
    let mut opt = Adam::new(params, lr);
    let r = x.shape()[1];
    let xb = x.reshape(&[1, 3, r, r])?;
    for _ in 0..steps {
        let mut g = Graph::new();
        let bp = params.bind(&mut g);
        let pp = proxy.params.bind(&mut g);
        let xn = g.leaf(xb.clone());
        let xhat = render(&mut g, &bp)?;
        let l = rec_loss(&mut g, proxy, &pp, xn, xhat, loss)?;
        let grads = g.backward(l.total, bp.ids())?;
        let grads: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();
        drop(g);
        opt.step(params, &grads)?;
    }
    Ok(())
}

fn latent_optimization(
    models: &Models,
    x: &Tensor,
    w_init: &Tensor,
    proxy: &ProxyFeatureNet,
    s: &BenchSettings,
) -> Result<Tensor> {
    let gen = &models.generator;
    let mut store = ParamStore::new();
    store.insert("w", w_init.reshape(&[1, gen.dims.w_dim])?)?;
    optimise(&mut store, s.latent_steps, s.latent_lr, x, proxy, &s.loss, |g, bp| {
        let gp = gen.params.bind(g);
        gen.synthesize(g, &gp, bp.id("w")?, None)
    })?;
    models.render(&store.get("w")?.reshape(&[gen.dims.w_dim])?, None)
}

fn per_image_finetune(models: &Models, x: &Tensor, proxy: &ProxyFeatureNet, s: &BenchSettings) -> Result<Tensor> {
    let (w, _) = models.invert_phase1(x)?;
    let gen = &models.generator;
    let wb = w.reshape(&[1, gen.dims.w_dim])?;
    let mut params = gen.params.clone();
    optimise(
        &mut params,
        s.finetune_steps,
        s.finetune_lr,
        x,
        proxy,
        &s.loss,
        |g, bp| {
            let wn = g.leaf(wb.clone());
            gen.synthesize(g, bp, wn, None)
        },
    )?;
    let tuned = Generator::from_params(&gen.dims, params)?;
    Ok(tuned.render(&wb)?.index(0))
}

/// Runs every strategy over `[3, R, R]` images. An empty set gives an
/// empty table.
pub fn bench(
    models: &Models,
    images: &[Tensor],
    strategies: &[Strategy],
    proxy: &ProxyFeatureNet,
    settings: &BenchSettings,
    mut progress: impl FnMut(Strategy, usize),
) -> Result<Vec<BenchRow>> {
    let n = images.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let w_avg = if strategies.contains(&Strategy::LatentOptimization) {
        Some(models.generator.mean_w(4096, settings.seed)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut per_image = Vec::with_capacity(n);
        for (i, x) in images.iter().enumerate() {
            let x = x.clone();
            let t = Instant::now();
            let xhat = match strategy {
                Strategy::Phase1Only => models.invert_phase1(&x)?.1,
                Strategy::Full => models.invert(&x)?.xhat,
                Strategy::LatentOptimization => {
                    latent_optimization(models, &x, w_avg.as_ref().expect("computed above"), proxy, settings)?
                }
                Strategy::PerImageFinetune => per_image_finetune(models, &x, proxy, settings)?,
            };
            let seconds = t.elapsed().as_secs_f64();
            let mut m = metrics(&x, &xhat, proxy, &settings.metrics)?;
            m.seconds = seconds;
            per_image.push(m);
            progress(strategy, i);
        }
        rows.push(BenchRow {
            strategy,
            metrics: MetricsRow::mean(&per_image).expect("non-empty"),
            images: n,
        });
    }
    Ok(rows)
}
