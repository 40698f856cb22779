// The toy generator's layer table, the hypernetwork parameter budget, and
// the zero-residual identity θ + 0 = θ.

use ganinv::config::ToyDims;
use ganinv::hypernet::{refine_generator, HyperNetwork, ResidualWeights};
use ganinv::rng::Rng;
use ganinv::synthgen::Generator;

pub fn run_example() -> ganinv::Result<()> {
    let dims = ToyDims::default();
    let gen = Generator::init(&dims, 0)?;
    let hyper = HyperNetwork::init(&dims, 0)?;
    println!("layer role        res  kernel            mapper (factorized / naive)");
    for l in &gen.layers {
        let c = hyper.mapper_count(l.index)?;
        println!(
            "{:>5} {:<11} {:>4}  {:<16}  {} / {}",
            l.index,
            l.role.tag(),
            l.resolution,
            format!("{:?}", l.kernel_shape()),
            c.factorized,
            c.naive
        );
    }
    println!(
        "feature transformer params per layer: {}",
        hyper.feature_transformer_count()
    );

    let mut rng = Rng::new(1);
    let w = gen.sample_w(4, &mut rng)?;
    let images = gen.render(&w)?;
    println!(
        "rendered {:?}, range [{:.3}, {:.3}]",
        images.shape(),
        images.data().iter().cloned().fold(f64::INFINITY, f64::min),
        images.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );

    let same = refine_generator(&gen, &ResidualWeights::zeros(&gen))?;
    assert!(same.render(&w)?.bit_eq(&images));
    assert_eq!(same.hash(), gen.hash());
    println!("zero residuals leave generation bit-identical");
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
