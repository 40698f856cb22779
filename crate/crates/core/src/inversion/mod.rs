//! Inference on trained models: inversion, latent editing, dual
//! interpolation, diagnostics, metrics and the reconstruction benchmark.

mod bench;
mod diagnostics;
mod directions;
mod metrics;

pub use bench::{bench, bench_csv, BenchRow, BenchSettings, Strategy, BENCH_HEADER};
pub use diagnostics::{
    aggregate_stats, difference_map, mean_difference_map, residual_stats, stats_csv, ResidualRow, STATS_HEADER,
};
pub use directions::{
    find_directions, load_directions, principal_components, save_directions, Direction, DirectionSource,
};
pub use metrics::{format_psnr, l2_unit, metrics, ms_ssim, psnr, MetricSettings, MetricsRow};

use std::path::Path;
use std::time::Instant;

use crate::cli::archive::{read_archive, write_archive, Fnv1a};
use crate::config::{Fusion, TrainConfig};
use crate::encoders::{fuse_values, AppearanceEncoder, ContentEncoder};
use crate::error::{Error, Result};
use crate::hypernet::{refine_generator, HyperNetwork, ResidualWeights};
use crate::synthgen::{ContentCode, Generator, GeneratorHash};
use crate::tensor::{ParamStore, Tensor};
use crate::training::{Checkpoint, Stage};

/// Frozen generator plus the trained two-phase encoder.
#[derive(Clone, Debug)]
pub struct Models {
    pub generator: Generator,
    pub content: ContentEncoder,
    pub appearance: AppearanceEncoder,
    pub hyper: HyperNetwork,
    pub fusion: Fusion,
}

/// Wall-clock seconds spent in each inversion stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timing {
    pub content: f64,
    pub render_w: f64,
    pub appearance: f64,
    pub hyper: f64,
    pub render: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.content + self.render_w + self.appearance + self.hyper + self.render
    }
}

#[derive(Clone, Debug)]
pub struct InversionResult {
    pub w: ContentCode,
    pub residuals: ResidualWeights,
    /// Phase-I reconstruction G(w, θ), `[3, R, R]`.
    pub xw: Tensor,
    /// Final reconstruction G(w, θ + Δθ), `[3, R, R]`.
    pub xhat: Tensor,
    pub timing: Timing,
}

impl InversionResult {
    pub fn generator(&self) -> GeneratorHash {
        self.w.generator
    }

    /// Hash of everything except timing.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for v in [
            self.w.generator.0,
            self.w.w.bit_hash(),
            self.residuals.hash(),
            self.xw.bit_hash(),
            self.xhat.bit_hash(),
        ] {
            h.write(&v.to_le_bytes());
        }
        h.finish()
    }

    /// Records `w`, `xw`, `xhat`, `delta.{j}` and `generator` (the hash as
    /// two 32-bit halves). Timing is not stored.
    pub fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new();
        let h = self.generator().0;
        s.insert(
            "generator",
            Tensor::from_slice(&[2], &[(h >> 32) as f64, (h & 0xffff_ffff) as f64])?,
        )?;
        s.insert("w", self.w.w.clone())?;
        s.insert("xw", self.xw.clone())?;
        s.insert("xhat", self.xhat.clone())?;
        for (j, d) in self.residuals.deltas.iter().enumerate() {
            s.insert(format!("delta.{j}"), d.clone())?;
        }
        Ok(s)
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let h = store.get("generator")?.data();
        if h.len() != 2 {
            return Err(Error::Format("`generator` must hold two words".into()));
        }
        let generator = GeneratorHash(((h[0] as u64) << 32) | h[1] as u64);
        let deltas: Vec<Tensor> = (0..)
            .map_while(|j| store.get(&format!("delta.{j}")).ok().cloned())
            .collect();
        Ok(InversionResult {
            w: ContentCode {
                w: store.get("w")?.clone(),
                generator,
            },
            residuals: ResidualWeights { deltas, generator },
            xw: store.get("xw")?.clone(),
            xhat: store.get("xhat")?.clone(),
            timing: Timing::default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(path, &self.to_store()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        InversionResult::from_store(&read_archive(path)?)
    }
}

/// Interpolation mode: lerp both codes and residuals, or only the latent
/// code through the frozen generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    Dual,
    LatentOnly,
}

impl InterpMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(InterpMode::Dual),
            "latent-only" => Ok(InterpMode::LatentOnly),
            _ => Err(Error::InvalidArgument(format!("unknown interpolation mode `{s}`"))),
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

/// w_t = (1 − t)·w_a + t·w_b elementwise.
pub fn lerp_latent(a: &Tensor, b: &Tensor, t: f64) -> Result<Tensor> {
    a.zip_map(b, "lerp_latent", |p, q| lerp(p, q, t))
}

/// Δθ_t = (1 − t)·Δθ_a + t·Δθ_b layer by layer.
pub fn lerp_residuals(a: &ResidualWeights, b: &ResidualWeights, t: f64) -> Result<ResidualWeights> {
    if a.generator != b.generator {
        return Err(Error::HashMismatch {
            expected: a.generator.to_string(),
            found: b.generator.to_string(),
        });
    }
    if a.deltas.len() != b.deltas.len() {
        return Err(Error::shape("lerp_residuals", &[a.deltas.len()], &[b.deltas.len()]));
    }
    let deltas = a
        .deltas
        .iter()
        .zip(&b.deltas)
        .map(|(p, q)| p.zip_map(q, "lerp_residuals", |x, y| lerp(x, y, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualWeights {
        deltas,
        generator: a.generator,
    })
}

/// w + γ·d elementwise.
pub fn edit_latent(w: &Tensor, d: &Direction, gamma: f64) -> Result<Tensor> {
    w.zip_map(&d.d, "edit_latent", |a, b| a + gamma * b)
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    *slot += t.elapsed().as_secs_f64();
    Ok(out)
}

impl Models {
    pub fn new(
        generator: Generator,
        content: ContentEncoder,
        appearance: AppearanceEncoder,
        hyper: HyperNetwork,
        fusion: Fusion,
    ) -> Result<Self> {
        let dims = &generator.dims;
        if &content.dims != dims || &appearance.dims != dims || &hyper.dims != dims {
            return Err(Error::Config("model dimensions disagree with the generator".into()));
        }
        if appearance.heads() != generator.num_layers() || hyper.layers != generator.layers {
            return Err(Error::Config(format!(
                "encoder built for {} layers, generator has {}",
                appearance.heads(),
                generator.num_layers()
            )));
        }
        Ok(Models {
            generator,
            content,
            appearance,
            hyper,
            fusion,
        })
    }

    /// Loads E₁, E₂ and H from a Phase-II checkpoint trained on `generator`.
    pub fn from_checkpoint(cfg: &TrainConfig, generator: Generator, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.stage != Stage::Phase2 {
            return Err(Error::Format(format!(
                "expected a phase2 checkpoint, got {}",
                ckpt.stage.name()
            )));
        }
        if ckpt.generator != generator.hash() {
            return Err(Error::HashMismatch {
                expected: generator.hash().to_string(),
                found: ckpt.generator.to_string(),
            });
        }
        let dims = &generator.dims;
        let content = ContentEncoder::from_params(dims, ckpt.params.extract_prefixed("e1.")?)?;
        let appearance = AppearanceEncoder::from_params(dims, ckpt.params.extract_prefixed("e2.")?)?;
        let hyper = HyperNetwork::from_params(dims, ckpt.params.extract_prefixed("hyper.")?)?;
        Models::new(generator, content, appearance, hyper, cfg.fusion)
    }

    fn check_image(&self, x: &Tensor) -> Result<()> {
        let r = self.generator.dims.resolution;
        if x.shape() != [3, r, r] {
            return Err(Error::shape("invert", x.shape(), &[3, r, r]));
        }
        Ok(())
    }

    fn check_hash(&self, found: GeneratorHash) -> Result<()> {
        let expected = self.generator.hash();
        if found != expected {
            return Err(Error::HashMismatch {
                expected: expected.to_string(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// G(w, θ + Δθ) for one code `[w_dim]`, or G(w, θ) without residuals.
    /// Every image this module returns is rendered here.
    pub fn render(&self, w: &Tensor, residuals: Option<&ResidualWeights>) -> Result<Tensor> {
        let w = w.reshape(&[1, self.generator.dims.w_dim])?;
        let img = match residuals {
            None => self.generator.render(&w)?,
            Some(r) => refine_generator(&self.generator, r)?.render(&w)?,
        };
        Ok(img.index(0))
    }

    /// Two-phase inversion of one `[3, R, R]` image in a single forward pass.
    pub fn invert(&self, x: &Tensor) -> Result<InversionResult> {
        self.check_image(x)?;
        let mut timing = Timing::default();
        let r = self.generator.dims.resolution;
        let xb = x.reshape(&[1, 3, r, r])?;
        let w = timed(&mut timing.content, || Ok(self.content.encode(&xb)?.index(0)))?;
        let xw = timed(&mut timing.render_w, || self.render(&w, None))?;
        let code = timed(&mut timing.appearance, || {
            let h = match self.fusion {
                Fusion::Fused => {
                    let h = self.appearance.encode(&Tensor::stack(&[x.clone(), xw.clone()])?)?;
                    fuse_values(&h.index(0), &h.index(1))?
                }
                Fusion::InputOnly => {
                    let hx = self.appearance.encode(&xb)?.index(0);
                    fuse_values(&hx, &hx)?
                }
            };
            Ok(h)
        })?;
        let residuals = timed(&mut timing.hyper, || {
            self.hyper.predict_residuals(&code, &self.generator)
        })?;
        let xhat = timed(&mut timing.render, || self.render(&w, Some(&residuals)))?;
        Ok(InversionResult {
            w: ContentCode {
                w,
                generator: self.generator.hash(),
            },
            residuals,
            xw,
            xhat,
            timing,
        })
    }

    /// Inverts each image of `[N, 3, R, R]` independently.
    pub fn invert_batch(&self, images: &Tensor) -> Result<Vec<InversionResult>> {
        if images.shape().len() != 4 {
            return Err(Error::shape("invert_batch", images.shape(), &[0, 3, 0, 0]));
        }
        (0..images.shape()[0]).map(|i| self.invert(&images.index(i))).collect()
    }

    /// Phase-I only: w = E₁(x) and G(w, θ).
    pub fn invert_phase1(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_image(x)?;
        let r = self.generator.dims.resolution;
        let w = self.content.encode(&x.reshape(&[1, 3, r, r])?)?.index(0);
        let xw = self.render(&w, None)?;
        Ok((w, xw))
    }

    /// Mean unit-range L2 of G(w, θ) and of G(w, θ + Δθ) against each image
    /// of `[N, 3, R, R]`.
    pub fn heldout_l2(&self, images: &Tensor) -> Result<(f64, f64)> {
        let n = images.shape()[0];
        let (mut phase1, mut full) = (0.0, 0.0);
        for i in 0..n {
            let x = images.index(i);
            let r = self.invert(&x)?;
            phase1 += l2_unit(&x, &r.xw)?;
            full += l2_unit(&x, &r.xhat)?;
        }
        Ok((phase1 / n as f64, full / n as f64))
    }

    /// G(w + γ·d, θ + Δθ): the residuals of the inversion are kept.
    pub fn edit(&self, result: &InversionResult, d: &Direction, gamma: f64) -> Result<Tensor> {
        self.check_hash(result.generator())?;
        self.check_hash(result.residuals.generator)?;
        let w = edit_latent(&result.w.w, d, gamma)?;
        self.render(&w, Some(&result.residuals))
    }

    pub fn interpolate(&self, a: &InversionResult, b: &InversionResult, t: f64, mode: InterpMode) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
        }
        for h in [
            a.generator(),
            b.generator(),
            a.residuals.generator,
            b.residuals.generator,
        ] {
            self.check_hash(h)?;
        }
        let w = lerp_latent(&a.w.w, &b.w.w, t)?;
        match mode {
            InterpMode::Dual => self.render(&w, Some(&lerp_residuals(&a.residuals, &b.residuals, t)?)),
            InterpMode::LatentOnly => self.render(&w, None),
        }
    }
}
