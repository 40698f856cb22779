// Tensor archives, PPM images and config text, each through a round trip.

use ganinv::cli::archive::{read_archive, write_archive};
use ganinv::cli::config::{apply_overrides, dump, parse};
use ganinv::cli::image::{read_ppm, write_ppm};
use ganinv::config::{Profile, TrainConfig};
use ganinv::rng::Rng;
use ganinv::tensor::{ParamStore, Tensor};

pub fn run_example() -> ganinv::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    let mut rng = Rng::new(2);

    let mut store = ParamStore::new();
    store.insert("weights", Tensor::randn(&[4, 3], 1.0, &mut rng))?;
    store.insert("bias", Tensor::from_slice(&[2], &[f64::MIN_POSITIVE, -0.0])?)?;
    let path = dir.path().join("t.hta");
    write_archive(&path, &store)?;
    assert_eq!(read_archive(&path)?, store);
    let mut bytes = std::fs::read(&path).map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    bytes[20] ^= 1;
    std::fs::write(&path, &bytes).map_err(|e| ganinv::Error::InvalidArgument(e.to_string()))?;
    println!("corrupted archive: {}", read_archive(&path).unwrap_err());

    let img = Tensor::randn(&[3, 8, 8], 0.5, &mut rng).map(|v| v.clamp(-1.0, 1.0));
    let p = dir.path().join("img.ppm");
    write_ppm(&p, &img)?;
    let back = read_ppm(&p)?;
    write_ppm(&dir.path().join("again.ppm"), &back)?;
    println!("ppm quantization error {:.5} (at most 1/255)", back.max_abs_diff(&img));

    let church = apply_overrides(
        &TrainConfig::with_profile(Profile::ChurchAnalog),
        &["train.lr=0.0002".into()],
    )?;
    assert_eq!(parse(&dump(&church))?, church);
    println!(
        "church-analog: lambda_id {} lambda_adv {} r1_gamma {}",
        church.loss.lambda_id, church.loss.lambda_adv, church.loss.r1_gamma
    );
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
