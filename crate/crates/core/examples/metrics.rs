// Reconstruction metrics: the identity tuple, the PSNR closed form and a
// noisy pair.

use ganinv::config::TrainConfig;
use ganinv::inversion::{format_psnr, metrics, MetricSettings};
use ganinv::losses::ProxyFeatureNet;
use ganinv::rng::Rng;
use ganinv::tensor::Tensor;

pub fn run_example() -> ganinv::Result<()> {
    let settings = MetricSettings::from_config(&TrainConfig::default());
    let proxy = ProxyFeatureNet::new(0x5eed)?;
    let mut rng = Rng::new(4);
    let x = Tensor::randn(&[3, 32, 32], 0.4, &mut rng).map(|v| v.clamp(-1.0, 1.0));

    let same = metrics(&x, &x, &proxy, &settings)?;
    println!(
        "x vs x: l2 {} psnr {} ms-ssim {} lpips {} id {}",
        same.l2,
        format_psnr(same.psnr),
        same.ms_ssim,
        same.lpips_proxy,
        same.id_proxy
    );

    let black = Tensor::full(&[3, 32, 32], -1.0);
    let grey = Tensor::zeros(&[3, 32, 32]);
    let m = metrics(&black, &grey, &proxy, &settings)?;
    println!("black vs mid-grey: l2 {} psnr {:.4} dB", m.l2, m.psnr);

    let noisy = x.add(&Tensor::randn(&[3, 32, 32], 0.1, &mut rng))?;
    let m = metrics(&x, &noisy, &proxy, &settings)?;
    println!(
        "x vs noisy: l2 {:.5} psnr {:.2} ms-ssim {:.4} lpips {:.4} id {:.4}",
        m.l2, m.psnr, m.ms_ssim, m.lpips_proxy, m.id_proxy
    );
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
