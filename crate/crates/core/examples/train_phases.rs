// Phase I with a CSV log and a mid-run checkpoint, a resumed run that
// matches the uninterrupted one bit for bit, then Phase II.

use ganinv::config::TrainConfig;
use ganinv::inversion::Models;
use ganinv::synthgen::pretrain_gan;
use ganinv::training::{drive, Checkpoint, Dataset, Phase1Trainer, Phase2Trainer, RunOutputs};

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let gan = pretrain_gan(&cfg, |_| {})?;
    let data = Dataset::build(&cfg, &gan.generator)?;
    let dir = tempfile::tempdir().map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    let (log, ckpt_path) = (dir.path().join("p1.csv"), dir.path().join("p1.hta"));

    let half = cfg.total_iters / 2;
    let mut t = Phase1Trainer::new(&cfg, &gan.generator, &data)?;
    let out = RunOutputs {
        log: Some(&log),
        checkpoint: Some(&ckpt_path),
    };
    drive(&mut t, half, 0, out, |_| {})?;

    let mut resumed = Phase1Trainer::resume(&cfg, &gan.generator, &data, &Checkpoint::load(&ckpt_path)?)?;
    let p1 = drive(&mut resumed, cfg.total_iters, 0, out, |r| {
        if (r.iteration + 1) % cfg.log_every == 0 {
            println!("phase1 iter {:>3}  l2 {:.5}", r.iteration + 1, r.l2);
        }
    })?;

    let mut straight = Phase1Trainer::new(&cfg, &gan.generator, &data)?;
    let reference = drive(&mut straight, cfg.total_iters, 0, RunOutputs::default(), |_| {})?;
    assert_eq!(p1.content_hash()?, reference.content_hash()?);
    let rows = std::fs::read_to_string(&log).map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    println!("resume matches; log has {} rows", rows.lines().count() - 1);

    let mut p2 = Phase2Trainer::new(
        &cfg,
        &gan.generator,
        &data,
        resumed.encoder.clone(),
        gan.discriminator.clone(),
    )?;
    let ckpt = drive(&mut p2, cfg.total_iters, 0, RunOutputs::default(), |r| {
        if let (Some(d), Some(r1)) = (r.d_loss, r.r1) {
            if (r.iteration + 1) % cfg.log_every == 0 {
                println!(
                    "phase2 iter {:>3}  l2 {:.5}  d {:.4}  r1 {:.4}",
                    r.iteration + 1,
                    r.l2,
                    d,
                    r1
                );
            }
        }
    })?;
    let models = Models::from_checkpoint(&cfg, gan.generator.clone(), &ckpt)?;
    let (l2_w, l2_full) = models.heldout_l2(&data.heldout)?;
    println!("held-out l2: phase1 {l2_w:.5}, full {l2_full:.5}");
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
