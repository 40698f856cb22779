//! Run drivers: CSV logging, periodic checkpoints and the pretrained-GAN
//! checkpoint.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cli::config::dump;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::synthgen::{Discriminator, Generator, PretrainedGan};
use crate::training::{Checkpoint, LogRow, Phase1Trainer, Phase2Trainer, Stage};

/// Common surface of the two trainers.
pub trait Trainer {
    fn iteration(&self) -> u64;
    fn step(&mut self) -> Result<LogRow>;
    fn snapshot(&self) -> Result<Checkpoint>;
}

impl Trainer for Phase1Trainer<'_> {
    fn iteration(&self) -> u64 {
        Phase1Trainer::iteration(self)
    }
    fn step(&mut self) -> Result<LogRow> {
        Phase1Trainer::step(self)
    }
    fn snapshot(&self) -> Result<Checkpoint> {
        Ok(self.checkpoint())
    }
}

impl Trainer for Phase2Trainer<'_> {
    fn iteration(&self) -> u64 {
        Phase2Trainer::iteration(self)
    }
    fn step(&mut self) -> Result<LogRow> {
        Phase2Trainer::step(self)
    }
    fn snapshot(&self) -> Result<Checkpoint> {
        self.checkpoint()
    }
}

/// Where a run writes its artifacts. Both are optional.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOutputs<'p> {
    /// Per-iteration CSV log. A fresh run truncates it; a resumed run appends.
    pub log: Option<&'p Path>,
    /// Checkpoint rewritten every `checkpoint_every` iterations and at the end.
    pub checkpoint: Option<&'p Path>,
}

fn open_log(path: &Path, fresh: bool) -> Result<BufWriter<File>> {
    let file = if fresh {
        File::create(path)
    } else {
        OpenOptions::new().append(true).create(true).open(path)
    }
    .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{}", LogRow::HEADER).map_err(|e| Error::io(path, e))?;
    }
    Ok(w)
}

/// Steps `trainer` until iteration `until`, logging every row and
/// checkpointing on schedule. `on_row` sees each row (for progress output).
pub fn drive(
    trainer: &mut impl Trainer,
    until: u64,
    checkpoint_every: u64,
    out: RunOutputs<'_>,
    mut on_row: impl FnMut(&LogRow),
) -> Result<Checkpoint> {
    let mut log = match out.log {
        Some(p) => Some((p, open_log(p, trainer.iteration() == 0)?)),
        None => None,
    };
    while trainer.iteration() < until {
        let row = trainer.step()?;
        if let Some((p, w)) = log.as_mut() {
            writeln!(w, "{}", row.csv()).map_err(|e| Error::io(*p, e))?;
        }
        on_row(&row);
        let it = trainer.iteration();
        if let Some(p) = out.checkpoint {
            if checkpoint_every > 0 && it % checkpoint_every == 0 && it < until {
                trainer.snapshot()?.save(p)?;
            }
        }
    }
    if let Some((p, mut w)) = log {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    let ckpt = trainer.snapshot()?;
    if let Some(p) = out.checkpoint {
        ckpt.save(p)?;
    }
    Ok(ckpt)
}

/// Stores a pretrained pair as `gen.*` and `disc.*` records.
pub fn pretrain_checkpoint(cfg: &TrainConfig, gan: &PretrainedGan) -> Result<Checkpoint> {
    let mut params = crate::tensor::ParamStore::new();
    params.absorb("gen.", &gan.generator.params)?;
    params.absorb("disc.", &gan.discriminator.params)?;
    Ok(Checkpoint {
        stage: Stage::Pretrain,
        iteration: gan.iterations,
        generator: gan.generator.hash(),
        config: dump(cfg),
        rng: [0; 4],
        params,
        optimizers: Vec::new(),
    })
}

/// The frozen generator and the pretrained discriminator of a pretrain
/// checkpoint. The stored hash must match the rebuilt generator.
pub fn load_pretrained(cfg: &TrainConfig, ckpt: &Checkpoint) -> Result<(Generator, Discriminator)> {
    if ckpt.stage != Stage::Pretrain {
        return Err(Error::Format(format!(
            "expected a pretrain checkpoint, got {}",
            ckpt.stage.name()
        )));
    }
    let generator = Generator::from_params(&cfg.dims, ckpt.params.extract("gen.")?)?;
    if generator.hash() != ckpt.generator {
        return Err(Error::HashMismatch {
            expected: ckpt.generator.to_string(),
            found: generator.hash().to_string(),
        });
    }
    let disc = Discriminator::from_params(cfg.dims.resolution, ckpt.params.extract("disc.")?)?;
    Ok((generator, disc))
}

/// The trained content encoder of a Phase-I checkpoint.
pub fn load_content_encoder(
    cfg: &TrainConfig,
    generator: &Generator,
    ckpt: &Checkpoint,
) -> Result<crate::encoders::ContentEncoder> {
    if ckpt.stage != Stage::Phase1 {
        return Err(Error::Format(format!(
            "expected a phase1 checkpoint, got {}",
            ckpt.stage.name()
        )));
    }
    super::phase1::check_generator(generator, ckpt)?;
    crate::encoders::ContentEncoder::from_params(&cfg.dims, ckpt.params.clone())
}

/// Everything one in-process training run produces.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub gan: PretrainedGan,
    pub data: crate::training::Dataset,
    pub phase1: Checkpoint,
    pub phase2: Checkpoint,
    pub models: crate::inversion::Models,
}

/// Pretrains the GAN, then runs Phase I and Phase II for
/// `cfg.total_iters` iterations each, without touching the disk.
pub fn train_all(cfg: &TrainConfig) -> Result<Pipeline> {
    let gan = crate::synthgen::pretrain_gan(cfg, |_| {})?;
    let data = crate::training::Dataset::build(cfg, &gan.generator)?;
    let mut p1 = Phase1Trainer::new(cfg, &gan.generator, &data)?;
    let phase1 = drive(&mut p1, cfg.total_iters, 0, RunOutputs::default(), |_| {})?;
    let content = p1.encoder.clone();
    let mut p2 = Phase2Trainer::new(cfg, &gan.generator, &data, content, gan.discriminator.clone())?;
    let phase2 = drive(&mut p2, cfg.total_iters, 0, RunOutputs::default(), |_| {})?;
    let models = crate::inversion::Models::from_checkpoint(cfg, gan.generator.clone(), &phase2)?;
    Ok(Pipeline {
        gan,
        data,
        phase1,
        phase2,
        models,
    })
}
