use ganinv::cli::archive::{decode, encode, DType};
use ganinv::config::{Fusion, ToyDims, TrainConfig};
use ganinv::encoders::{AppearanceEncoder, ContentEncoder};
use ganinv::hypernet::HyperNetwork;
use ganinv::inversion::{lerp_latent, metrics, Direction, DirectionSource, InterpMode, MetricSettings, Models};
use ganinv::losses::ProxyFeatureNet;
use ganinv::rng::Rng;
use ganinv::synthgen::Generator;
use ganinv::tensor::{ParamStore, Tensor};
use proptest::prelude::*;

fn small_dims() -> ToyDims {
    ToyDims {
        resolution: 8,
        z_dim: 4,
        w_dim: 5,
        channels: 4,
        appearance_channels: 2,
        appearance_size: 2,
        hidden_dim: 3,
        feature_dim: 3,
    }
}

/// Models with random encoder heads and random mapper matrices, so every
/// inversion carries non-zero residuals.
fn random_models(seed: u64) -> Models {
    let dims = small_dims();
    let mut rng = Rng::new(seed);
    let mut content = ContentEncoder::init(&dims, seed).unwrap();
    let head = content.params.get("e1.head.w").unwrap().shape().to_vec();
    content
        .params
        .set("e1.head.w", Tensor::randn(&head, 0.2, &mut rng))
        .unwrap();
    let mut hyper = HyperNetwork::init(&dims, seed).unwrap();
    for name in hyper
        .params
        .names()
        .iter()
        .filter(|n| n.ends_with(".B"))
        .cloned()
        .collect::<Vec<_>>()
    {
        let shape = hyper.params.get(&name).unwrap().shape().to_vec();
        hyper.params.set(&name, Tensor::randn(&shape, 0.05, &mut rng)).unwrap();
    }
    Models::new(
        Generator::init(&dims, seed).unwrap(),
        content,
        AppearanceEncoder::init(&dims, seed).unwrap(),
        hyper,
        Fusion::Fused,
    )
    .unwrap()
}

fn sample_store(seed: u64, records: usize) -> ParamStore {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    for i in 0..records {
        let shape = [1 + rng.below(4), 1 + rng.below(5)];
        store
            .insert(format!("t{i}"), Tensor::randn(&shape, 10.0, &mut rng))
            .unwrap();
    }
    store
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupting_any_byte_is_detected(seed in any::<u64>(), records in 1usize..4, pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = encode(&sample_store(seed, records), DType::F64).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode(&bytes).is_err());
    }

    #[test]
    fn archives_round_trip_bit_exact(seed in any::<u64>(), records in 0usize..5) {
        let store = sample_store(seed, records);
        let back = decode(&encode(&store, DType::F64).unwrap()).unwrap();
        prop_assert_eq!(back.names(), store.names());
        for n in store.names() {
            prop_assert!(back.get(n).unwrap().bit_eq(store.get(n).unwrap()));
        }
    }

    #[test]
    fn metrics_of_an_image_against_itself(seed in any::<u64>(), std in 0.01f64..2.0) {
        let cfg = TrainConfig::default();
        let settings = MetricSettings::from_config(&cfg);
        let proxy = ProxyFeatureNet::new(cfg.loss.proxy_seed).unwrap();
        let x = Tensor::randn(&[3, 32, 32], std, &mut Rng::new(seed)).map(|v| v.clamp(-1.0, 1.0));
        let m = metrics(&x, &x, &proxy, &settings).unwrap();
        prop_assert_eq!(m.l2, 0.0);
        prop_assert_eq!(m.psnr, f64::INFINITY);
        prop_assert_eq!(m.ms_ssim, 1.0);
        prop_assert_eq!(m.lpips_proxy, 0.0);
        prop_assert_eq!(m.id_proxy, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn edit_and_interpolation_endpoints(seed in 0u64..4, img_seed in any::<u64>(), t in 0.0f64..=1.0, dir_seed in any::<u64>()) {
        let m = random_models(seed);
        let mut rng = Rng::new(img_seed);
        let a = m.invert(&Tensor::randn(&[3, 8, 8], 0.5, &mut rng)).unwrap();
        let b = m.invert(&Tensor::randn(&[3, 8, 8], 0.5, &mut rng)).unwrap();
        prop_assert!(a.residuals.deltas.iter().any(|d| d.data().iter().any(|&v| v != 0.0)));

        let raw = Tensor::randn(&[5], 1.0, &mut Rng::new(dir_seed));
        let norm = raw.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = Direction::new(raw.scale(1.0 / norm), "d", DirectionSource::File).unwrap();
        prop_assert!(m.edit(&a, &d, 0.0).unwrap().bit_eq(&a.xhat));
        prop_assert!(m.interpolate(&a, &b, 0.0, InterpMode::Dual).unwrap().bit_eq(&a.xhat));
        prop_assert!(m.interpolate(&a, &b, 1.0, InterpMode::Dual).unwrap().bit_eq(&b.xhat));

        let w = lerp_latent(&a.w.w, &b.w.w, t).unwrap();
        for (i, v) in w.data().iter().enumerate() {
            prop_assert_eq!(v.to_bits(), ((1.0 - t) * a.w.w.data()[i] + t * b.w.w.data()[i]).to_bits());
        }
        // Latent-only interpolation renders the lerped code through θ.
        prop_assert!(m.interpolate(&a, &b, t, InterpMode::LatentOnly).unwrap().bit_eq(&m.render(&w, None).unwrap()));
    }
}
