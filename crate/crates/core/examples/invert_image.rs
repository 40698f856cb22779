// Trains a small model end to end, then inverts one held-out image.

use ganinv::config::TrainConfig;
use ganinv::inversion::l2_unit;
use ganinv::training::train_all;

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let t = std::time::Instant::now();
    let p = train_all(&cfg)?;
    println!("trained in {:.1}s", t.elapsed().as_secs_f64());

    let x = p.data.heldout.index(0);
    let r = p.models.invert(&x)?;
    println!("phase1 l2 {:.5}", l2_unit(&x, &r.xw)?);
    println!("full   l2 {:.5}", l2_unit(&x, &r.xhat)?);
    println!("inference {:.2} ms", r.timing.total() * 1e3);

    // The stored outputs regenerate from (w, Δθ) and the frozen generator.
    assert!(p.models.render(&r.w.w, Some(&r.residuals))?.bit_eq(&r.xhat));
    assert!(p.models.render(&r.w.w, None)?.bit_eq(&r.xw));
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
