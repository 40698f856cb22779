//! Per-layer hypernetworks H_j predicting residual kernels Δθ_j from the
//! appearance code, and the refinement θ̂ = θ + Δθ.

use crate::config::ToyDims;
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::Rng;
use crate::synthgen::{layer_table, Generator, GeneratorHash, LayerSpec};
use crate::tensor::{Bound, ConvGeom, Graph, NodeId, ParamStore, Tensor};

/// Parameter counts of one linear mapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapperCount {
    /// `F·c_out·D + D·c_in·k²`.
    pub factorized: usize,
    /// `F·c_out·c_in·k²`, a single matrix straight to the kernel.
    pub naive: usize,
}

pub fn mapper_param_count(c_out: usize, c_in: usize, k: usize, f: usize, d: usize) -> MapperCount {
    MapperCount {
        factorized: f * c_out * d + d * c_in * k * k,
        naive: f * c_out * c_in * k * k,
    }
}

/// Width of the intermediate feature-transformer convs.
pub const FT_WIDTH: usize = 64;

/// Residual kernels for one image, one tensor per generator layer, tied to
/// the generator they were predicted for.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualWeights {
    pub deltas: Vec<Tensor>,
    pub generator: GeneratorHash,
}

impl ResidualWeights {
    pub fn zeros(generator: &Generator) -> Self {
        ResidualWeights {
            deltas: generator
                .layers
                .iter()
                .map(|l| Tensor::zeros(&l.kernel_shape()))
                .collect(),
            generator: generator.hash(),
        }
    }

    pub fn hash(&self) -> u64 {
        let mut h = crate::cli::archive::Fnv1a::new();
        for d in &self.deltas {
            h.write(&d.bit_hash().to_le_bytes());
        }
        h.finish()
    }
}

/// All N hypernetworks. Parameters are keyed `hyper.{j}.ft.{i}.{w,b}`,
/// `hyper.{j}.A`, `hyper.{j}.B`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperNetwork {
    pub dims: ToyDims,
    pub layers: Vec<LayerSpec>,
    pub params: ParamStore,
    ft_depth: usize,
}

impl HyperNetwork {
    /// Feature-transformer convs are He-initialised, `A_j ~ N(0, 1/F)` and
    /// `B_j = 0`, so the initial residuals are exactly zero.
    pub fn init(dims: &ToyDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let s = dims.appearance_size;
        if s < 2 {
            return Err(Error::Config("toy.appearance_size must be at least 2".into()));
        }
        let ft_depth = s.trailing_zeros() as usize;
        let layers = layer_table(dims);
        let (f, d) = (dims.feature_dim, dims.hidden_dim);
        let mut rng = Rng::derive(seed, 0x4e7);
        let mut params = ParamStore::new();
        for l in &layers {
            let j = l.index;
            let mut cin = 2 * dims.appearance_channels;
            for i in 0..ft_depth {
                let cout = if i + 1 == ft_depth { f } else { FT_WIDTH };
                nn::init_conv(&mut params, &format!("hyper.{j}.ft.{i}"), cout, cin, 3, &mut rng)?;
                cin = cout;
            }
            let a_std = (1.0 / f as f64).sqrt();
            params.insert(
                format!("hyper.{j}.A"),
                Tensor::randn(&[f, l.out_channels * d], a_std, &mut rng),
            )?;
            let kk = l.kernel * l.kernel;
            params.insert(format!("hyper.{j}.B"), Tensor::zeros(&[d, l.in_channels * kk]))?;
        }
        Ok(HyperNetwork {
            dims: dims.clone(),
            layers,
            params,
            ft_depth,
        })
    }

    pub fn from_params(dims: &ToyDims, params: ParamStore) -> Result<Self> {
        let mut fresh = HyperNetwork::init(dims, 0)?;
        if params.len() != fresh.params.len() {
            return Err(Error::MissingTensor(format!(
                "hypernetwork expects {} tensors, got {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (name, value) in params.iter() {
            fresh.params.set(name, value.clone())?;
        }
        Ok(fresh)
    }

    /// Number of feature-transformer parameters per layer:
    /// `Σ_i (c_out,i · c_in,i · 9 + c_out,i)`.
    pub fn feature_transformer_count(&self) -> usize {
        let mut cin = 2 * self.dims.appearance_channels;
        let mut total = 0;
        for i in 0..self.ft_depth {
            let cout = if i + 1 == self.ft_depth {
                self.dims.feature_dim
            } else {
                FT_WIDTH
            };
            total += cout * cin * 9 + cout;
            cin = cout;
        }
        total
    }

    pub fn mapper_count(&self, j: usize) -> Result<MapperCount> {
        let l = self.spec(j)?;
        Ok(mapper_param_count(
            l.out_channels,
            l.in_channels,
            l.kernel,
            self.dims.feature_dim,
            self.dims.hidden_dim,
        ))
    }

    fn spec(&self, j: usize) -> Result<&LayerSpec> {
        self.layers
            .get(j.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidArgument(format!("no generator layer {j}")))
    }

    /// H_j on a batch of appearance slices `[B, 2·C_a, s, s]`, giving per-sample
    /// residual kernels `[B, c_out, c_in, k, k]`.
    pub fn layer_forward(&self, g: &mut Graph, p: &Bound, j: usize, slice: NodeId) -> Result<NodeId> {
        let l = self.spec(j)?;
        let (ca2, s) = (2 * self.dims.appearance_channels, self.dims.appearance_size);
        let shape = g.shape(slice).to_vec();
        if shape.len() != 4 || shape[1..] != [ca2, s, s] {
            return Err(Error::shape("hyper_layer_forward", &shape, &[0, ca2, s, s]));
        }
        let batch = shape[0];
        let mut h = slice;
        for i in 0..self.ft_depth {
            h = nn::conv_act(g, p, &format!("hyper.{j}.ft.{i}"), h, ConvGeom::DOWN3)?;
        }
        let f = g.reshape(h, &[batch, self.dims.feature_dim])?;
        let e = g.matmul(f, p.id(&format!("hyper.{j}.A"))?)?;
        let e = g.reshape(e, &[batch * l.out_channels, self.dims.hidden_dim])?;
        let delta = g.matmul(e, p.id(&format!("hyper.{j}.B"))?)?;
        let [o, i, k, _] = l.kernel_shape();
        g.reshape(delta, &[batch, o, i, k, k])
    }

    /// Δθ_j = H_j(h^{(j)}) for every layer, from a fused code
    /// `[B, L, 2·C_a, s, s]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, code: NodeId) -> Result<Vec<NodeId>> {
        let shape = g.shape(code).to_vec();
        let l = self.layers.len();
        if shape.len() != 5 || shape[1] != l {
            return Err(Error::shape("predict_residuals", &shape, &[0, l, 0, 0, 0]));
        }
        let (batch, rest) = (shape[0], &shape[2..]);
        let mut out = Vec::with_capacity(l);
        for spec in &self.layers {
            let slice = g.slice(code, 1, spec.style_index - 1, 1)?;
            let slice = g.reshape(slice, &[batch, rest[0], rest[1], rest[2]])?;
            out.push(self.layer_forward(g, p, spec.index, slice)?);
        }
        Ok(out)
    }

    /// Residuals for a single fused code `[L, 2·C_a, s, s]`.
    pub fn predict_residuals(&self, code: &Tensor, generator: &Generator) -> Result<ResidualWeights> {
        let mut shape = vec![1];
        shape.extend_from_slice(code.shape());
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let h = g.leaf(code.reshape(&shape)?);
        let ids = self.forward(&mut g, &p, h)?;
        let deltas = ids.iter().map(|&id| g.value(id).index(0)).collect();
        Ok(ResidualWeights {
            deltas,
            generator: generator.hash(),
        })
    }
}

/// θ̂ = θ + Δθ on the convolution kernels only; everything else is copied.
pub fn refine_generator(generator: &Generator, residuals: &ResidualWeights) -> Result<Generator> {
    if residuals.generator != generator.hash() {
        return Err(Error::HashMismatch {
            expected: generator.hash().to_string(),
            found: residuals.generator.to_string(),
        });
    }
    if residuals.deltas.len() != generator.layers.len() {
        return Err(Error::shape(
            "refine_generator",
            &[residuals.deltas.len()],
            &[generator.layers.len()],
        ));
    }
    let mut params = generator.params.clone();
    for (l, delta) in generator.layers.iter().zip(&residuals.deltas) {
        let refined = params.get(&l.weight_name())?.add(delta)?;
        if refined.shape() != l.kernel_shape() {
            return Err(Error::shape("refine_generator", refined.shape(), &l.kernel_shape()));
        }
        params.set(&l.weight_name(), refined)?;
    }
    Generator::from_params(&generator.dims, params)
}
