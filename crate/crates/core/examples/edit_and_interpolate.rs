// Latent editing along principal directions and dual interpolation between
// two inversions.

use ganinv::config::TrainConfig;
use ganinv::inversion::{find_directions, InterpMode};
use ganinv::training::train_all;

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let p = train_all(&cfg)?;
    let m = &p.models;
    let (dirs, values) = find_directions(&m.generator, 3, cfg.directions_samples, cfg.seed)?;
    for (d, v) in dirs.iter().zip(&values) {
        println!("{}: eigenvalue {v:.4}", d.label);
    }

    let a = m.invert(&p.data.heldout.index(0))?;
    let b = m.invert(&p.data.heldout.index(1))?;
    assert!(m.edit(&a, &dirs[0], 0.0)?.bit_eq(&a.xhat));
    for gamma in [-3.0, -1.0, 1.0, 3.0] {
        let e = m.edit(&a, &dirs[0], gamma)?;
        println!("gamma {gamma:+}: mean |edit - xhat| {:.4}", e.sub(&a.xhat)?.mean_abs());
    }

    assert!(m.interpolate(&a, &b, 0.0, InterpMode::Dual)?.bit_eq(&a.xhat));
    assert!(m.interpolate(&a, &b, 1.0, InterpMode::Dual)?.bit_eq(&b.xhat));
    for t in [0.25, 0.5, 0.75] {
        let dual = m.interpolate(&a, &b, t, InterpMode::Dual)?;
        let latent = m.interpolate(&a, &b, t, InterpMode::LatentOnly)?;
        println!(
            "t {t}: dual vs latent-only mean diff {:.5}",
            dual.sub(&latent)?.mean_abs()
        );
    }
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
