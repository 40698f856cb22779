// Per-layer residual magnitudes and the mean difference map between the
// final and Phase-I reconstructions.

use ganinv::cli::image::write_heat_pgm;
use ganinv::config::TrainConfig;
use ganinv::inversion::{aggregate_stats, mean_difference_map, residual_stats, stats_csv};
use ganinv::training::train_all;

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let p = train_all(&cfg)?;
    let m = &p.models;
    let n = p.data.heldout.shape()[0];
    let results = (0..n)
        .map(|i| m.invert(&p.data.heldout.index(i)))
        .collect::<ganinv::Result<Vec<_>>>()?;

    let per_image = results
        .iter()
        .map(|r| residual_stats(&r.residuals, &m.generator.layers))
        .collect::<ganinv::Result<Vec<_>>>()?;
    print!("{}", stats_csv(&aggregate_stats(&per_image)?));

    let pairs: Vec<_> = results.iter().map(|r| (r.xhat.clone(), r.xw.clone())).collect();
    let map = mean_difference_map(&pairs)?;
    println!("difference map {:?}, mean {:.5}", map.shape(), map.mean());
    let dir = tempfile::tempdir().map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    write_heat_pgm(&dir.path().join("diff.pgm"), &map)?;
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
