// The four inversion strategies on a small held-out set.

use ganinv::config::TrainConfig;
use ganinv::inversion::{bench, bench_csv, BenchSettings, Strategy};
use ganinv::losses::ProxyFeatureNet;
use ganinv::training::train_all;

pub fn run_example() -> ganinv::Result<()> {
    let cfg = TrainConfig::tiny();
    let p = train_all(&cfg)?;
    let images: Vec<_> = (0..4).map(|i| p.data.heldout.index(i)).collect();
    let proxy = ProxyFeatureNet::new(cfg.loss.proxy_seed)?;
    let rows = bench(
        &p.models,
        &images,
        &Strategy::ALL,
        &proxy,
        &BenchSettings::from_config(&cfg),
        |_, _| {},
    )?;
    print!("{}", bench_csv(&rows));
    let secs = |s: Strategy| {
        rows.iter()
            .find(|r| r.strategy == s)
            .map(|r| r.metrics.seconds)
            .unwrap_or(0.0)
    };
    println!(
        "latent optimization is {:.0}x slower per image than the encoder",
        secs(Strategy::LatentOptimization) / secs(Strategy::Full)
    );
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
