//! The full finite-difference gradient suite: every primitive op plus the
//! model-level composites (modulated conv, generator, encoders,
//! hypernetwork layers, every loss including R1 through double backprop).

use crate::config::{LossConfig, Profile, ToyDims};
use crate::encoders::{AppearanceEncoder, ContentEncoder};
use crate::error::Result;
use crate::hypernet::HyperNetwork;
use crate::losses::{adv_loss_g, cosine_rows, d_loss, enc_loss, rec_loss, ProxyFeatureNet};
use crate::rng::Rng;
use crate::synthgen::{modulated_conv2d, Discriminator, Generator};
use crate::tensor::{
    check_gradients, check_param_gradients, default_cases, grad_check, GradReport, Tensor, PRIMITIVE_OPS,
};

/// Maximum relative error a case may reach to pass.
pub const TOLERANCE: f64 = 1e-5;

/// Seeds of the composite cases.
pub const SEEDS: [u64; 5] = [7, 1, 0, 42, 1234];

/// Parameter elements probed per tensor in composite cases.
const PER_INPUT: usize = 12;

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub name: String,
    pub seed: u64,
    pub report: GradReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.max_relative_error <= TOLERANCE
    }
}

pub const COMPOSITES: &[&str] = &[
    "modulated-conv2d-plain",
    "generator",
    "content-encoder",
    "appearance-encoder",
    "hypernetwork-layer",
    "cosine-rows",
    "rec-loss",
    "adv-loss",
    "enc-loss",
    "d-loss-r1",
];

fn tiny() -> ToyDims {
    ToyDims {
        resolution: 8,
        z_dim: 4,
        w_dim: 3,
        channels: 3,
        appearance_channels: 2,
        appearance_size: 2,
        hidden_dim: 2,
        feature_dim: 3,
    }
}

fn randomize(store: &mut crate::tensor::ParamStore, suffix: &str, std: f64, rng: &mut Rng) -> Result<()> {
    let names: Vec<String> = store.names().iter().filter(|n| n.ends_with(suffix)).cloned().collect();
    for n in names {
        let shape = store.get(&n)?.shape().to_vec();
        store.set(&n, Tensor::randn(&shape, std, rng))?;
    }
    Ok(())
}

/// Runs one composite case.
pub fn composite(name: &str, seed: u64) -> Result<GradReport> {
    let dims = tiny();
    let mut rng = Rng::derive(seed, 0x5a17);
    let img = |rng: &mut Rng, b: usize| Tensor::randn(&[b, 3, 8, 8], 0.5, rng);
    let loss_cfg = LossConfig {
        lambda_id: 0.3,
        ..Profile::FacesAnalog.loss()
    };
    match name {
        "modulated-conv2d-plain" => {
            let x = Tensor::randn(&[2, 3, 4, 4], 1.0, &mut rng);
            let k = Tensor::randn(&[2, 3, 1, 1], 1.0, &mut rng);
            let s = Tensor::randn(&[2, 3], 1.0, &mut rng);
            check_gradients(&[x, k, s], seed, |g, v| modulated_conv2d(g, v[0], v[1], v[2], false))
        }
        "generator" => {
            let gen = Generator::init(&dims, seed)?;
            let w = Tensor::randn(&[2, dims.w_dim], 1.0, &mut rng);
            check_param_gradients(&gen.params, &[w], seed, PER_INPUT, |g, p, x| {
                gen.synthesize(g, p, x[0], None)
            })
        }
        "content-encoder" => {
            let mut e1 = ContentEncoder::init(&dims, seed)?;
            randomize(&mut e1.params, "head.w", 0.3, &mut rng)?;
            check_param_gradients(&e1.params, &[img(&mut rng, 2)], seed, PER_INPUT, |g, p, x| {
                e1.forward(g, p, x[0])
            })
        }
        "appearance-encoder" => {
            let e2 = AppearanceEncoder::with_heads(&dims, 2, seed)?;
            check_param_gradients(&e2.params, &[img(&mut rng, 2)], seed, PER_INPUT, |g, p, x| {
                e2.forward(g, p, x[0])
            })
        }
        "hypernetwork-layer" => {
            let mut h = HyperNetwork::init(&dims, seed)?;
            randomize(&mut h.params, ".B", 1.0, &mut rng)?;
            let j = 1 + (seed as usize % dims.num_layers());
            let prefix = format!("hyper.{j}.");
            let store = h.params.extract_prefixed(&prefix)?;
            let s = dims.appearance_size;
            let slice = Tensor::randn(&[2, 2 * dims.appearance_channels, s, s], 1.0, &mut rng);
            check_param_gradients(&store, &[slice], seed, PER_INPUT, |g, p, x| {
                h.layer_forward(g, p, j, x[0])
            })
        }
        "cosine-rows" => {
            let a = Tensor::randn(&[3, 5], 1.0, &mut rng);
            let b = Tensor::randn(&[3, 5], 1.0, &mut rng);
            check_gradients(&[a, b], seed, |g, v| cosine_rows(g, v[0], v[1]))
        }
        "rec-loss" => {
            let proxy = ProxyFeatureNet::new(seed)?;
            check_gradients(&[img(&mut rng, 1), img(&mut rng, 1)], seed, |g, v| {
                let pp = proxy.params.bind(g);
                Ok(rec_loss(g, &proxy, &pp, v[0], v[1], &loss_cfg)?.total)
            })
        }
        "adv-loss" => {
            let l = Tensor::randn(&[4, 1], 2.0, &mut rng);
            check_gradients(&[l], seed, |g, v| adv_loss_g(g, v[0]))
        }
        "enc-loss" => {
            let proxy = ProxyFeatureNet::new(seed)?;
            let disc = Discriminator::init(&dims, seed)?;
            let x = img(&mut rng, 1);
            check_gradients(&[img(&mut rng, 1)], seed, |g, v| {
                let pp = proxy.params.bind(g);
                let dp = disc.params.bind(g);
                let xn = g.leaf(x.clone());
                let rec = rec_loss(g, &proxy, &pp, xn, v[0], &loss_cfg)?;
                let logits = disc.forward(g, &dp, v[0])?;
                Ok(enc_loss(g, &rec, Some(logits), 0.15)?.0)
            })
        }
        "d-loss-r1" => {
            let disc = Discriminator::init(&dims, seed)?;
            let (real, fake) = (img(&mut rng, 2), img(&mut rng, 2));
            check_param_gradients(&disc.params, &[real, fake], seed, PER_INPUT, |g, p, x| {
                Ok(d_loss(g, x[0], x[1], 10.0, |g, im| disc.forward(g, p, im))?.total)
            })
        }
        other => Err(crate::Error::UnknownOp(other.to_string())),
    }
}

/// Every primitive default case and every composite at each of [`SEEDS`].
/// `on_case` sees each case as it finishes.
pub fn run_suite(mut on_case: impl FnMut(&SuiteCase)) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for op in PRIMITIVE_OPS {
        for (shapes, seed) in default_cases(op) {
            let case = SuiteCase {
                name: (*op).to_string(),
                seed,
                report: grad_check(op, &shapes, seed)?,
            };
            on_case(&case);
            out.push(case);
        }
    }
    for name in COMPOSITES {
        for seed in SEEDS {
            let case = SuiteCase {
                name: (*name).to_string(),
                seed,
                report: composite(name, seed)?,
            };
            on_case(&case);
            out.push(case);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_suite_passes() {
        let cases = run_suite(|_| {}).unwrap();
        assert_eq!(cases.len(), (PRIMITIVE_OPS.len() + COMPOSITES.len()) * SEEDS.len());
        for c in &cases {
            assert!(c.passed(), "{} seed {}: {:?}", c.name, c.seed, c.report);
            assert!(c.report.elements_checked > 0);
        }
    }
}
