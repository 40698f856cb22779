// Adversarial pretraining of the toy generator on procedural shapes, with
// a few samples written as PPM files.

use ganinv::cli::image::write_ppm;
use ganinv::config::TrainConfig;
use ganinv::rng::Rng;
use ganinv::synthgen::{logit_gap, pretrain_gan};
use ganinv::training::{load_pretrained, pretrain_checkpoint, Checkpoint};

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let gan = pretrain_gan(&cfg, |s| {
        if (s.iteration + 1) % 10 == 0 {
            println!(
                "iter {:>3}  d {:.4}  r1 {:.4}  g {:.4}",
                s.iteration + 1,
                s.d_loss,
                s.r1,
                s.g_loss
            );
        }
    })?;
    println!("logit gap real - fake: {:.4}", logit_gap(&gan, 1, 16)?);

    let dir = tempfile::tempdir().map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    let w = gan.generator.sample_w(3, &mut Rng::new(9))?;
    let imgs = gan.generator.render(&w)?;
    for i in 0..3 {
        write_ppm(&dir.path().join(format!("sample{i}.ppm")), &imgs.index(i))?;
    }

    let path = dir.path().join("gan.hta");
    pretrain_checkpoint(&cfg, &gan)?.save(&path)?;
    let (gen, _) = load_pretrained(&cfg, &Checkpoint::load(&path)?)?;
    assert_eq!(gen.hash(), gan.generator.hash());
    println!("generator {} saved and reloaded", gen.hash());
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
