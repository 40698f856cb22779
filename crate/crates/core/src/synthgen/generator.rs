use std::fmt;

use crate::config::ToyDims;
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::Rng;
use crate::synthgen::modulated_conv2d;
use crate::tensor::{Bound, Graph, NodeId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRole {
    MainConv,
    ToRgb,
}

impl LayerRole {
    pub fn tag(self) -> &'static str {
        match self {
            LayerRole::MainConv => "main-conv",
            LayerRole::ToRgb => "torgb-conv",
        }
    }
}

/// One refinable convolution of the generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    /// 1-based layer index j.
    pub index: usize,
    pub role: LayerRole,
    pub resolution: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// 1-based style index i(j); equal to `index` for this generator.
    pub style_index: usize,
}

impl LayerSpec {
    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn weight_name(&self) -> String {
        format!("conv.{}.w", self.index)
    }
}

/// Main conv then torgb at each resolution 4, 8, ..., R.
pub fn layer_table(dims: &ToyDims) -> Vec<LayerSpec> {
    let c = dims.channels;
    let mut layers = Vec::with_capacity(dims.num_layers());
    for block in 0..dims.blocks() {
        let res = 4 << block;
        for (role, out, k) in [(LayerRole::MainConv, c, 3), (LayerRole::ToRgb, 3, 1)] {
            let index = layers.len() + 1;
            layers.push(LayerSpec {
                index,
                role,
                resolution: res,
                in_channels: c,
                out_channels: out,
                kernel: k,
                style_index: index,
            });
        }
    }
    layers
}

/// Content-hash of a frozen generator, carried by every derived code.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeneratorHash(pub u64);

impl fmt::Display for GeneratorHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for GeneratorHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeneratorHash({self})")
    }
}

/// A latent code w together with the generator it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode {
    pub w: Tensor,
    pub generator: GeneratorHash,
}

/// Style-based generator: mapping network, per-layer style affines, and a
/// skip-architecture synthesis network whose convolution kernels are the
/// refinement targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub dims: ToyDims,
    pub layers: Vec<LayerSpec>,
    pub params: ParamStore,
}

impl Generator {
    pub fn init(dims: &ToyDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::derive(seed, 0x6e6e);
        let mut params = ParamStore::new();
        let c = dims.channels;
        params.insert("const", Tensor::randn(&[1, c, 4, 4], 1.0, &mut rng))?;
        nn::init_linear(
            &mut params,
            "map.0",
            dims.z_dim,
            dims.w_dim,
            (2.0 / dims.z_dim as f64).sqrt(),
            &mut rng,
        )?;
        nn::init_linear(
            &mut params,
            "map.1",
            dims.w_dim,
            dims.w_dim,
            (2.0 / dims.w_dim as f64).sqrt(),
            &mut rng,
        )?;
        let layers = layer_table(dims);
        for l in &layers {
            let std = match l.role {
                LayerRole::MainConv => 1.0,
                LayerRole::ToRgb => 1.0 / (l.in_channels as f64).sqrt(),
            };
            params.insert(l.weight_name(), Tensor::randn(&l.kernel_shape(), std, &mut rng))?;
            params.insert(format!("conv.{}.b", l.index), Tensor::zeros(&[l.out_channels]))?;
            params.insert(
                format!("affine.{}.w", l.index),
                Tensor::randn(&[dims.w_dim, l.in_channels], 0.5 / (dims.w_dim as f64).sqrt(), &mut rng),
            )?;
            params.insert(format!("affine.{}.b", l.index), Tensor::ones(&[l.in_channels]))?;
        }
        Ok(Generator {
            dims: dims.clone(),
            layers,
            params,
        })
    }

    /// Rebuilds a generator from stored parameters, checking them against
    /// the layer table.
    pub fn from_params(dims: &ToyDims, params: ParamStore) -> Result<Self> {
        dims.validate()?;
        let layers = layer_table(dims);
        for l in &layers {
            let w = params.get(&l.weight_name())?;
            if w.shape() != l.kernel_shape() {
                return Err(Error::shape("generator_layer", w.shape(), &l.kernel_shape()));
            }
        }
        params.get("const")?;
        Ok(Generator {
            dims: dims.clone(),
            layers,
            params,
        })
    }

    pub fn hash(&self) -> GeneratorHash {
        GeneratorHash(self.params.content_hash())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Kernel θ_j of layer `j` (1-based).
    pub fn kernel(&self, j: usize) -> Result<&Tensor> {
        self.params.get(&format!("conv.{j}.w"))
    }

    /// z → w through the mapping network; `z: [B, z_dim]`.
    pub fn map_latent(&self, g: &mut Graph, p: &Bound, z: NodeId) -> Result<NodeId> {
        let h = nn::linear(g, p, "map.0", z)?;
        let h = g.leaky_relu(h)?;
        let h = nn::linear(g, p, "map.1", h)?;
        g.leaky_relu(h)
    }

    /// Renders `[B, 3, R, R]` from `w: [B, w_dim]`.
    ///
    /// `residuals`, when given, holds one per-sample tensor `[B, O, I, k, k]`
    /// per layer, added to the frozen kernels before convolving.
    pub fn synthesize(&self, g: &mut Graph, p: &Bound, w: NodeId, residuals: Option<&[NodeId]>) -> Result<NodeId> {
        let ws = g.shape(w).to_vec();
        if ws.len() != 2 || ws[1] != self.dims.w_dim {
            return Err(Error::shape("synthesize", &ws, &[0, self.dims.w_dim]));
        }
        if let Some(r) = residuals {
            if r.len() != self.layers.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} residual tensors for {} layers",
                    r.len(),
                    self.layers.len()
                )));
            }
        }
        let batch = ws[0];
        let c = self.dims.channels;
        let mut x = g.broadcast_to(p.id("const")?, &[batch, c, 4, 4])?;
        let mut rgb: Option<NodeId> = None;
        for pair in self.layers.chunks(2) {
            let (main, torgb) = (&pair[0], &pair[1]);
            if main.resolution > 4 {
                x = g.upsample2x(x)?;
            }
            x = self.layer(g, p, main, w, x, residuals)?;
            x = g.leaky_relu(x)?;
            let y = self.layer(g, p, torgb, w, x, residuals)?;
            rgb = Some(match rgb {
                None => y,
                Some(prev) => {
                    let up = g.upsample2x(prev)?;
                    g.add(up, y)?
                }
            });
        }
        Ok(rgb.expect("at least one block"))
    }

    fn layer(
        &self,
        g: &mut Graph,
        p: &Bound,
        spec: &LayerSpec,
        w: NodeId,
        x: NodeId,
        residuals: Option<&[NodeId]>,
    ) -> Result<NodeId> {
        let j = spec.index;
        let styles = nn::linear(g, p, &format!("affine.{}", spec.style_index), w)?;
        let mut kernel = p.id(&spec.weight_name())?;
        if let Some(r) = residuals {
            kernel = g.add(kernel, r[j - 1])?;
        }
        let y = modulated_conv2d(g, x, kernel, styles, spec.role == LayerRole::MainConv)?;
        nn::channel_bias(g, y, p.id(&format!("conv.{j}.b"))?)
    }

    /// Draws `n` latent codes w from z ~ N(0, I).
    pub fn sample_w(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        let z = Tensor::randn(&[n, self.dims.z_dim], 1.0, rng);
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let zn = g.leaf(z);
        let w = self.map_latent(&mut g, &p, zn)?;
        Ok(g.value(w).clone())
    }

    /// Images for a batch of codes `w: [B, w_dim]`.
    pub fn render(&self, w: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let wn = g.leaf(w.clone());
        let x = self.synthesize(&mut g, &p, wn, None)?;
        Ok(g.value(x).clone())
    }

    /// G(w, θ) for a single content code; returns `[3, R, R]`.
    pub fn generate(&self, code: &ContentCode) -> Result<Tensor> {
        if code.generator != self.hash() {
            return Err(Error::HashMismatch {
                expected: self.hash().to_string(),
                found: code.generator.to_string(),
            });
        }
        let w = code.w.reshape(&[1, self.dims.w_dim])?;
        Ok(self.render(&w)?.index(0))
    }

    /// Mean of `n` sampled codes, the centre of the w distribution.
    pub fn mean_w(&self, n: usize, seed: u64) -> Result<Tensor> {
        let mut rng = Rng::derive(seed, 0x3a3a);
        let w = self.sample_w(n, &mut rng)?;
        let d = self.dims.w_dim;
        let mut mean = Tensor::zeros(&[d]);
        for row in w.data().chunks(d) {
            for (m, v) in mean.data_mut().iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_table_is_consistent() {
        let t = layer_table(&ToyDims::default());
        assert_eq!(t.len(), 8);
        for (i, l) in t.iter().enumerate() {
            assert_eq!(l.index, i + 1);
            assert_eq!(l.style_index, l.index);
            match l.role {
                LayerRole::MainConv => assert_eq!(l.kernel, 3),
                LayerRole::ToRgb => assert_eq!(l.kernel, 1),
            }
        }
        let res: Vec<usize> = t.iter().map(|l| l.resolution).collect();
        assert_eq!(res, [4, 4, 8, 8, 16, 16, 32, 32]);
    }

    fn small() -> ToyDims {
        ToyDims {
            resolution: 8,
            channels: 4,
            z_dim: 6,
            w_dim: 6,
            ..ToyDims::default()
        }
    }

    #[test]
    fn generate_is_deterministic_and_shaped() {
        let gen = Generator::init(&small(), 0).unwrap();
        let mut rng = Rng::new(0);
        let w = gen.sample_w(2, &mut rng).unwrap();
        let a = gen.render(&w).unwrap();
        let b = gen.render(&w).unwrap();
        assert_eq!(a.shape(), &[2, 3, 8, 8]);
        assert!(a.bit_eq(&b));
        assert!(a.is_finite());
    }

    #[test]
    fn zero_residual_is_bit_identical() {
        let gen = Generator::init(&small(), 3).unwrap();
        let mut rng = Rng::new(1);
        let w = gen.sample_w(2, &mut rng).unwrap();
        let mut g = Graph::new();
        let p = gen.params.bind(&mut g);
        let wn = g.leaf(w);
        let plain = gen.synthesize(&mut g, &p, wn, None).unwrap();
        let zeros: Vec<NodeId> = gen
            .layers
            .iter()
            .map(|l| {
                let [o, i, k, _] = l.kernel_shape();
                g.leaf(Tensor::zeros(&[2, o, i, k, k]))
            })
            .collect();
        let refined = gen.synthesize(&mut g, &p, wn, Some(&zeros)).unwrap();
        assert!(g.value(plain).bit_eq(g.value(refined)));
    }

    #[test]
    fn hash_mismatch_rejected() {
        let gen = Generator::init(&small(), 0).unwrap();
        let code = ContentCode {
            w: Tensor::zeros(&[6]),
            generator: GeneratorHash(1),
        };
        assert!(matches!(gen.generate(&code), Err(Error::HashMismatch { .. })));
    }
}
