use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::{adv_loss_g, d_loss};
use crate::rng::Rng;
use crate::synthgen::{sample_dataset, Discriminator, Generator};
use crate::tensor::{Adam, Graph, Tensor};

/// A generator/discriminator pair after adversarial pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedGan {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub iterations: u64,
}

/// Per-iteration pretraining losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainLog {
    pub iteration: u64,
    pub d_loss: f64,
    pub r1: f64,
    pub g_loss: f64,
}

fn real_batch(seed: u64, iteration: u64, batch: usize, res: usize) -> Result<Tensor> {
    let imgs: Vec<Tensor> = (0..batch)
        .map(|b| {
            sample_dataset(
                seed ^ iteration
                    .wrapping_mul(batch as u64)
                    .wrapping_add(b as u64)
                    .wrapping_mul(0x9e37),
                1,
                res,
            )
            .remove(0)
        })
        .collect();
    Tensor::stack(&imgs)
}

/// Trains G and D on procedural shapes with the non-saturating loss and
/// R1 on reals, alternating one D step and one G step.
pub fn pretrain_gan(cfg: &TrainConfig, mut on_step: impl FnMut(&PretrainLog)) -> Result<PretrainedGan> {
    cfg.validate()?;
    let mut generator = Generator::init(&cfg.dims, cfg.seed)?;
    let mut discriminator = Discriminator::init(&cfg.dims, cfg.seed)?;
    let mut g_opt = Adam::new(&generator.params, cfg.pretrain_lr);
    let mut d_opt = Adam::new(&discriminator.params, cfg.pretrain_lr);
    g_opt.beta1 = 0.0;
    d_opt.beta1 = 0.0;
    g_opt.beta2 = 0.99;
    d_opt.beta2 = 0.99;
    let batch = cfg.pretrain_batch;
    let res = cfg.dims.resolution;
    for it in 0..cfg.pretrain_iters {
        let mut rng = Rng::derive(cfg.seed, 0x7000_0000 + it);
        let z = Tensor::randn(&[batch, cfg.dims.z_dim], 1.0, &mut rng);
        let real = real_batch(cfg.data.seed, it, batch, res)?;

        // Discriminator step.
        let (d_val, r1_val) = {
            let mut g = Graph::new();
            let gp = generator.params.bind(&mut g);
            let dp = discriminator.params.bind(&mut g);
            let zn = g.leaf(z.clone());
            let w = generator.map_latent(&mut g, &gp, zn)?;
            let fake = generator.synthesize(&mut g, &gp, w, None)?;
            let real_n = g.leaf(real);
            let dl = d_loss(&mut g, real_n, fake, cfg.loss.r1_gamma, |g, x| {
                discriminator.forward(g, &dp, x)
            })?;
            let grads = g.backward(dl.total, dp.ids())?;
            let grads: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();
            let vals = (g.value(dl.total).item(), g.value(dl.r1).item());
            if !vals.0.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    what: "discriminator loss".into(),
                });
            }
            drop(g);
            d_opt.step(&mut discriminator.params, &grads)?;
            vals
        };

        // Generator step.
        let g_val = {
            let mut g = Graph::new();
            let gp = generator.params.bind(&mut g);
            let dp = discriminator.params.bind(&mut g);
            let zn = g.leaf(z);
            let w = generator.map_latent(&mut g, &gp, zn)?;
            let fake = generator.synthesize(&mut g, &gp, w, None)?;
            let logits = discriminator.forward(&mut g, &dp, fake)?;
            let loss = adv_loss_g(&mut g, logits)?;
            let grads = g.backward(loss, gp.ids())?;
            let grads: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();
            let v = g.value(loss).item();
            if !v.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    what: "generator loss".into(),
                });
            }
            drop(g);
            g_opt.step(&mut generator.params, &grads)?;
            v
        };
        on_step(&PretrainLog {
            iteration: it,
            d_loss: d_val,
            r1: r1_val,
            g_loss: g_val,
        });
    }
    Ok(PretrainedGan {
        generator,
        discriminator,
        iterations: cfg.pretrain_iters,
    })
}

/// Mean D logit on real minus fake samples, over a held-out batch.
pub fn logit_gap(gan: &PretrainedGan, seed: u64, n: usize) -> Result<f64> {
    let res = gan.generator.dims.resolution;
    let real = real_batch(seed ^ 0x4e1d, u64::MAX / 2, n, res)?;
    let mut rng = Rng::derive(seed, 0x4e1d);
    let w = gan.generator.sample_w(n, &mut rng)?;
    let fake = gan.generator.render(&w)?;
    let mut g = Graph::new();
    let dp = gan.discriminator.params.bind(&mut g);
    let r = g.leaf(real);
    let f = g.leaf(fake);
    let lr = gan.discriminator.forward(&mut g, &dp, r)?;
    let lf = gan.discriminator.forward(&mut g, &dp, f)?;
    Ok(g.value(lr).mean() - g.value(lf).mean())
}
