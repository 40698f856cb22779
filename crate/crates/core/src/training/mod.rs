//! Phase-I (content encoder) and Phase-II (appearance encoder, hypernetworks,
//! discriminator) training loops.
//!
//! Trainers advance one iteration per [`Phase1Trainer::step`] and can be
//! snapshotted to a [`Checkpoint`] at any iteration; restoring and stepping
//! on reproduces the uninterrupted run bit for bit.

mod checkpoint;
mod phase1;
mod phase2;
mod run;

pub use checkpoint::{Checkpoint, Stage};
pub use phase1::Phase1Trainer;
pub use phase2::Phase2Trainer;
pub use run::{
    drive, load_content_encoder, load_pretrained, pretrain_checkpoint, train_all, Pipeline, RunOutputs, Trainer,
};

use crate::config::{DataMode, TrainConfig};
use crate::error::Result;
use crate::rng::Rng;
use crate::synthgen::{sample_dataset, Generator};
use crate::tensor::Tensor;

/// Training and held-out images, `[N, 3, R, R]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Tensor,
    pub heldout: Tensor,
}

const RENDER_CHUNK: usize = 32;

fn render_many(generator: &Generator, n: usize, rng: &mut Rng) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(n);
    let mut left = n;
    while left > 0 {
        let k = left.min(RENDER_CHUNK);
        let w = generator.sample_w(k, rng)?;
        let imgs = generator.render(&w)?;
        rows.extend((0..k).map(|i| imgs.index(i)));
        left -= k;
    }
    Tensor::stack(&rows)
}

impl Dataset {
    /// Self-inversion draws targets from the frozen generator; shapes mode
    /// uses procedural images. Train and held-out sets use disjoint streams.
    pub fn build(cfg: &TrainConfig, generator: &Generator) -> Result<Dataset> {
        let (n_train, n_held) = (cfg.data.train_size, cfg.data.heldout_size.max(1));
        match cfg.data.mode {
            DataMode::SelfInversion => Ok(Dataset {
                train: render_many(generator, n_train, &mut Rng::derive(cfg.data.seed, 0xda7a))?,
                heldout: render_many(generator, n_held, &mut Rng::derive(cfg.data.seed, 0x4e1d))?,
            }),
            DataMode::Shapes => {
                let res = cfg.dims.resolution;
                Ok(Dataset {
                    train: Tensor::stack(&sample_dataset(cfg.data.seed, n_train, res))?,
                    heldout: Tensor::stack(&sample_dataset(cfg.data.seed ^ 0x4e1d_0000, n_held, res))?,
                })
            }
        }
    }

    pub fn train_len(&self) -> usize {
        self.train.shape()[0]
    }
}

/// One training-log row. Adversarial columns are `None` when no
/// adversarial step ran at that iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub l2: f64,
    pub perc: f64,
    pub id: f64,
    pub adv: Option<f64>,
    pub d_loss: Option<f64>,
    pub r1: Option<f64>,
}

impl LogRow {
    pub const HEADER: &'static str = "iteration,l2,perc,id,adv,d_loss,r1";

    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.l2,
            self.perc,
            self.id,
            opt(self.adv),
            opt(self.d_loss),
            opt(self.r1)
        )
    }
}

fn draw_batch(rng: &mut Rng, data: &Tensor, batch: usize) -> Result<Tensor> {
    let n = data.shape()[0];
    let idx: Vec<usize> = (0..batch).map(|_| rng.below(n)).collect();
    data.gather_rows(&idx)
}

fn finite(iteration: u64, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(crate::Error::Diverged {
            iteration,
            what: what.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ToyDims;
    use crate::hypernet::refine_generator;
    use crate::synthgen::Discriminator;

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.dims = ToyDims {
            resolution: 8,
            z_dim: 4,
            w_dim: 6,
            channels: 4,
            appearance_channels: 2,
            appearance_size: 2,
            hidden_dim: 2,
            feature_dim: 3,
        };
        cfg.ms_ssim_scales = 1;
        cfg.data.train_size = 12;
        cfg.data.heldout_size = 4;
        cfg.batch_size_warm = 3;
        cfg.batch_size_adv = 2;
        cfg.warmup_iters = 3;
        cfg.total_iters = 8;
        cfg
    }

    fn setup(cfg: &TrainConfig) -> (Generator, Dataset) {
        let gen = Generator::init(&cfg.dims, 7).unwrap();
        let data = Dataset::build(cfg, &gen).unwrap();
        (gen, data)
    }

    #[test]
    fn phase1_zero_iterations_is_init() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let mut t = Phase1Trainer::new(&cfg, &gen, &data).unwrap();
        let init = t.encoder.params.clone();
        t.run_until(0, |_| Ok(())).unwrap();
        assert_eq!(t.checkpoint().params, init);
        assert_eq!(t.checkpoint().iteration, 0);
    }

    #[test]
    fn phase1_is_deterministic() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let run = || {
            let mut t = Phase1Trainer::new(&cfg, &gen, &data).unwrap();
            t.run_until(200, |_| Ok(())).unwrap();
            t.checkpoint().content_hash().unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn phase1_resume_matches_uninterrupted() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let mut full = Phase1Trainer::new(&cfg, &gen, &data).unwrap();
        full.run_until(100, |_| Ok(())).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p1.hta");
        let mut half = Phase1Trainer::new(&cfg, &gen, &data).unwrap();
        half.run_until(50, |_| Ok(())).unwrap();
        half.checkpoint().save(&path).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        let mut resumed = Phase1Trainer::resume(&cfg, &gen, &data, &ckpt).unwrap();
        resumed.run_until(100, |_| Ok(())).unwrap();
        assert_eq!(
            resumed.checkpoint().content_hash().unwrap(),
            full.checkpoint().content_hash().unwrap()
        );
    }

    #[test]
    fn resume_rejects_other_generator() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let t = Phase1Trainer::new(&cfg, &gen, &data).unwrap();
        let other = Generator::init(&cfg.dims, 8).unwrap();
        let err = Phase1Trainer::resume(&cfg, &other, &data, &t.checkpoint())
            .err()
            .unwrap();
        assert!(matches!(err, crate::Error::HashMismatch { .. }), "{err}");
    }

    fn phase2(cfg: &TrainConfig, gen: &Generator, data: &Dataset) -> Result<Phase2Trainer<'static>> {
        let gen: &'static Generator = Box::leak(Box::new(gen.clone()));
        let data: &'static Dataset = Box::leak(Box::new(data.clone()));
        let mut p1 = Phase1Trainer::new(cfg, gen, data)?;
        p1.run_until(5, |_| Ok(()))?;
        let disc = Discriminator::init(&cfg.dims, 3)?;
        Phase2Trainer::new(cfg, gen, data, p1.encoder.clone(), disc)
    }

    #[test]
    fn phase2_starts_at_phase1_reconstruction() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let t = phase2(&cfg, &gen, &data).unwrap();
        let x = data.heldout.clone();
        let w = t.content.encode(&x).unwrap();
        let xw = gen.render(&w).unwrap();
        let h = crate::encoders::fuse_values(&t.appearance.encode(&x).unwrap(), &t.appearance.encode(&xw).unwrap())
            .unwrap();
        for i in 0..x.shape()[0] {
            let res = t.hyper.predict_residuals(&h.index(i), &gen).unwrap();
            let refined = refine_generator(&gen, &res).unwrap();
            let xhat = refined.render(&w.gather_rows(&[i]).unwrap()).unwrap();
            assert!(xhat.bit_eq(&xw.gather_rows(&[i]).unwrap()));
        }
    }

    #[test]
    fn discriminator_frozen_through_warmup() {
        let mut cfg = tiny_cfg();
        cfg.warmup_iters = cfg.total_iters;
        let (gen, data) = setup(&cfg);
        let mut t = phase2(&cfg, &gen, &data).unwrap();
        let (d0, e1) = (t.discriminator.params.clone(), t.content.params.clone());
        let mut rows = Vec::new();
        t.run_until(cfg.total_iters, |r| {
            rows.push(*r);
            Ok(())
        })
        .unwrap();
        assert_eq!(t.discriminator.params, d0);
        assert_eq!(t.content.params, e1);
        assert!(rows.iter().all(|r| r.d_loss.is_none() && r.adv.is_none()));
    }

    #[test]
    fn phase2_schedule_and_resume() {
        let cfg = tiny_cfg();
        let (gen, data) = setup(&cfg);
        let mut full = phase2(&cfg, &gen, &data).unwrap();
        let (d0, e1) = (full.discriminator.params.clone(), full.content.params.clone());
        let mut rows = Vec::new();
        full.run_until(cfg.total_iters, |r| {
            rows.push(*r);
            Ok(())
        })
        .unwrap();
        for r in &rows {
            assert_eq!(r.d_loss.is_some(), r.iteration >= cfg.warmup_iters, "{r:?}");
        }
        assert_ne!(full.discriminator.params, d0);
        assert_eq!(full.content.params, e1);

        let mut half = phase2(&cfg, &gen, &data).unwrap();
        half.run_until(5, |_| Ok(())).unwrap();
        let ckpt = Checkpoint::from_store(&half.checkpoint().unwrap().to_store().unwrap()).unwrap();
        let mut resumed = Phase2Trainer::resume(&cfg, half_gen(&half), half_data(&half), &ckpt).unwrap();
        resumed.run_until(cfg.total_iters, |_| Ok(())).unwrap();
        assert_eq!(
            resumed.checkpoint().unwrap().content_hash().unwrap(),
            full.checkpoint().unwrap().content_hash().unwrap()
        );
    }

    fn half_gen<'a>(t: &Phase2Trainer<'a>) -> &'a Generator {
        t.generator_ref()
    }

    fn half_data<'a>(t: &Phase2Trainer<'a>) -> &'a Dataset {
        t.dataset_ref()
    }

    #[test]
    fn log_row_csv() {
        let r = LogRow {
            iteration: 3,
            l2: 0.5,
            perc: 0.25,
            id: 0.0,
            adv: None,
            d_loss: Some(1.5),
            r1: None,
        };
        assert_eq!(r.csv(), "3,0.5,0.25,0,,1.5,");
        assert_eq!(LogRow::HEADER.split(',').count(), r.csv().split(',').count());
    }
}
