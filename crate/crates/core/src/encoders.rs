//! Image encoders: the content encoder E₁ (image → w) and the shared
//! appearance encoder E₂ (image → per-layer feature stack).
//!
//! Both take batched images `[B, 3, R, R]`. An appearance half is
//! `[B, L, C_a, s, s]`; the fused appearance code doubles the channel axis.

use crate::config::ToyDims;
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::Rng;
use crate::tensor::{ConvGeom, Graph, NodeId, ParamStore, Tensor};

fn check_images(op: &'static str, shape: &[usize], resolution: usize) -> Result<usize> {
    if shape.len() != 4 || shape[1] != 3 || shape[2] != resolution || shape[3] != resolution {
        return Err(Error::shape(op, shape, &[0, 3, resolution, resolution]));
    }
    Ok(shape[0])
}

/// Channel widths of the strided pyramid: a stride-1 stem, then one stride-2
/// conv per halving down to `target` spatial size.
fn pyramid_widths(resolution: usize, target: usize) -> Vec<usize> {
    let halvings = (resolution / target).trailing_zeros() as usize;
    let mut widths = vec![32];
    for i in 0..halvings {
        widths.push(if i == 0 { 32 } else { 64 });
    }
    widths
}

fn init_pyramid(params: &mut ParamStore, prefix: &str, widths: &[usize], rng: &mut Rng) -> Result<()> {
    let mut cin = 3;
    for (i, &w) in widths.iter().enumerate() {
        nn::init_conv(params, &format!("{prefix}.{i}"), w, cin, 3, rng)?;
        cin = w;
    }
    Ok(())
}

fn run_pyramid(g: &mut Graph, p: &crate::tensor::Bound, prefix: &str, depth: usize, x: NodeId) -> Result<NodeId> {
    let mut h = x;
    for i in 0..depth {
        let geom = if i == 0 { ConvGeom::SAME3 } else { ConvGeom::DOWN3 };
        h = nn::conv_act(g, p, &format!("{prefix}.{i}"), h, geom)?;
    }
    Ok(h)
}

/// E₁: strided conv pyramid to 4×4, global mean pool, linear head to `w_dim`.
/// The head weight starts at zero, so an untrained encoder outputs its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentEncoder {
    pub dims: ToyDims,
    pub params: ParamStore,
    depth: usize,
}

impl ContentEncoder {
    pub fn init(dims: &ToyDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::derive(seed, 0xe1);
        let widths = pyramid_widths(dims.resolution, 4.min(dims.resolution));
        let mut params = ParamStore::new();
        init_pyramid(&mut params, "e1.conv", &widths, &mut rng)?;
        let last = *widths.last().expect("non-empty pyramid");
        params.insert("e1.head.w", Tensor::zeros(&[last, dims.w_dim]))?;
        params.insert("e1.head.b", Tensor::zeros(&[dims.w_dim]))?;
        Ok(ContentEncoder {
            dims: dims.clone(),
            params,
            depth: widths.len(),
        })
    }

    pub fn from_params(dims: &ToyDims, params: ParamStore) -> Result<Self> {
        let mut fresh = ContentEncoder::init(dims, 0)?;
        for (name, value) in params.iter() {
            fresh.params.set(name, value.clone())?;
        }
        if params.len() != fresh.params.len() {
            return Err(Error::MissingTensor(format!(
                "content encoder expects {} tensors, got {}",
                fresh.params.len(),
                params.len()
            )));
        }
        Ok(fresh)
    }

    /// `[B, 3, R, R] → [B, w_dim]`.
    pub fn forward(&self, g: &mut Graph, p: &crate::tensor::Bound, images: NodeId) -> Result<NodeId> {
        check_images("encode_content", g.shape(images), self.dims.resolution)?;
        let h = run_pyramid(g, p, "e1.conv", self.depth, images)?;
        let pooled = nn::spatial_mean(g, h)?;
        nn::linear(g, p, "e1.head", pooled)
    }

    /// Content codes for a batch of images.
    pub fn encode(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let x = g.leaf(images.clone());
        let w = self.forward(&mut g, &p, x)?;
        Ok(g.value(w).clone())
    }
}

/// E₂: shared trunk down to `s × s`, then one independent 1×1 head per
/// style layer. The same parameters encode x and the Phase-I reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct AppearanceEncoder {
    pub dims: ToyDims,
    pub params: ParamStore,
    depth: usize,
    heads: usize,
}

impl AppearanceEncoder {
    pub fn init(dims: &ToyDims, seed: u64) -> Result<Self> {
        Self::with_heads(dims, dims.num_layers(), seed)
    }

    /// Encoder with a non-default head count; forward output then has that
    /// many layers and will not match a generator with a different L.
    pub fn with_heads(dims: &ToyDims, heads: usize, seed: u64) -> Result<Self> {
        dims.validate()?;
        if heads == 0 {
            return Err(Error::Config("appearance encoder needs at least one head".into()));
        }
        let mut rng = Rng::derive(seed, 0xe2);
        let widths = pyramid_widths(dims.resolution, dims.appearance_size);
        let mut params = ParamStore::new();
        init_pyramid(&mut params, "e2.trunk", &widths, &mut rng)?;
        let last = *widths.last().expect("non-empty pyramid");
        for j in 1..=heads {
            nn::init_conv(
                &mut params,
                &format!("e2.head.{j}"),
                dims.appearance_channels,
                last,
                1,
                &mut rng,
            )?;
        }
        Ok(AppearanceEncoder {
            dims: dims.clone(),
            params,
            depth: widths.len(),
            heads,
        })
    }

    pub fn from_params(dims: &ToyDims, params: ParamStore) -> Result<Self> {
        let heads = (1..)
            .take_while(|j| params.get(&format!("e2.head.{j}.w")).is_ok())
            .count();
        if heads != dims.num_layers() {
            return Err(Error::shape("appearance_heads", &[heads], &[dims.num_layers()]));
        }
        let mut fresh = AppearanceEncoder::init(dims, 0)?;
        if params.len() != fresh.params.len() {
            return Err(Error::MissingTensor(format!(
                "appearance encoder expects {} tensors, got {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (name, value) in params.iter() {
            fresh.params.set(name, value.clone())?;
        }
        Ok(fresh)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// `[B, 3, R, R] → [B, L, C_a, s, s]`.
    pub fn forward(&self, g: &mut Graph, p: &crate::tensor::Bound, images: NodeId) -> Result<NodeId> {
        let batch = check_images("encode_appearance", g.shape(images), self.dims.resolution)?;
        let trunk = run_pyramid(g, p, "e2.trunk", self.depth, images)?;
        // The heads are independent 1×1 convs; stacking their kernels runs
        // them as one conv.
        let mut ws = Vec::with_capacity(self.heads);
        let mut bs = Vec::with_capacity(self.heads);
        for j in 1..=self.heads {
            ws.push(p.id(&format!("e2.head.{j}.w"))?);
            bs.push(p.id(&format!("e2.head.{j}.b"))?);
        }
        let w = g.concat(&ws, 0)?;
        let b = g.concat(&bs, 0)?;
        let y = g.conv2d(trunk, w, ConvGeom::POINTWISE)?;
        let y = nn::channel_bias(g, y, b)?;
        let (ca, s) = (self.dims.appearance_channels, self.dims.appearance_size);
        g.reshape(y, &[batch, self.heads, ca, s, s])
    }

    pub fn encode(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let x = g.leaf(images.clone());
        let h = self.forward(&mut g, &p, x)?;
        Ok(g.value(h).clone())
    }
}

/// Appearance code h = concat(h_x, h_x̂w) along the channel axis (third from
/// last), `h_x` first. Works for batched `[B, L, C, s, s]` or single
/// `[L, C, s, s]` halves.
pub fn fuse(g: &mut Graph, h_x: NodeId, h_xw: NodeId) -> Result<NodeId> {
    let (a, b) = (g.shape(h_x), g.shape(h_xw));
    if a != b || a.len() < 4 {
        return Err(Error::shape("fuse", a, b));
    }
    let axis = a.len() - 3;
    g.concat(&[h_x, h_xw], axis)
}

/// Value-level [`fuse`].
pub fn fuse_values(h_x: &Tensor, h_xw: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let a = g.leaf(h_x.clone());
    let b = g.leaf(h_xw.clone());
    let h = fuse(&mut g, a, b)?;
    Ok(g.value(h).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_param_gradients;

    fn tiny() -> ToyDims {
        ToyDims {
            resolution: 8,
            z_dim: 4,
            w_dim: 3,
            channels: 4,
            appearance_channels: 2,
            appearance_size: 2,
            hidden_dim: 2,
            feature_dim: 3,
        }
    }

    #[test]
    fn zero_head_gives_zero_code() {
        let dims = ToyDims::default();
        let e1 = ContentEncoder::init(&dims, 0).unwrap();
        let x = Tensor::randn(&[2, 3, 32, 32], 1.0, &mut Rng::new(1));
        let w = e1.encode(&x).unwrap();
        assert_eq!(w.shape(), &[2, 64]);
        assert!(w.data().iter().all(|&v| v == 0.0));
        assert!(w.bit_eq(&e1.encode(&x).unwrap()));
    }

    #[test]
    fn appearance_shape_and_sharing() {
        let dims = ToyDims::default();
        let e2 = AppearanceEncoder::init(&dims, 0).unwrap();
        let x = Tensor::randn(&[1, 3, 32, 32], 1.0, &mut Rng::new(2));
        assert_eq!(e2.encode(&x).unwrap().shape(), &[1, 8, 32, 4, 4]);
        // One parameter set serves every input: count does not depend on use.
        let before = e2.params.count();
        let y = Tensor::randn(&[3, 3, 32, 32], 1.0, &mut Rng::new(3));
        e2.encode(&y).unwrap();
        assert_eq!(e2.params.count(), before);
    }

    #[test]
    fn heads_are_independent() {
        let dims = tiny();
        let mut e2 = AppearanceEncoder::init(&dims, 5).unwrap();
        let x = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut Rng::new(4));
        let before = e2.encode(&x).unwrap();
        e2.params.get_mut("e2.head.2.b").unwrap().data_mut()[0] += 1.0;
        let after = e2.encode(&x).unwrap();
        let per_layer = before.len() / dims.num_layers();
        for (i, (a, b)) in before.data().iter().zip(after.data()).enumerate() {
            let layer = i / per_layer;
            let chan = (i % per_layer) / 4;
            if layer == 1 && chan == 0 {
                assert!((b - a - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn wrong_image_shape() {
        let e1 = ContentEncoder::init(&ToyDims::default(), 0).unwrap();
        assert!(matches!(
            e1.encode(&Tensor::zeros(&[1, 3, 16, 16])),
            Err(Error::ShapeMismatch { .. })
        ));
        let e2 = AppearanceEncoder::init(&ToyDims::default(), 0).unwrap();
        assert!(e2.encode(&Tensor::zeros(&[1, 1, 32, 32])).is_err());
    }

    #[test]
    fn fuse_layout() {
        let mut rng = Rng::new(9);
        let a = Tensor::randn(&[8, 32, 4, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[8, 32, 4, 4], 1.0, &mut rng);
        let aa = fuse_values(&a, &a).unwrap();
        assert_eq!(aa.shape(), &[8, 64, 4, 4]);
        for layer in aa.data().chunks(64 * 16) {
            assert_eq!(&layer[..512], &layer[512..]);
        }
        assert!(!fuse_values(&a, &b).unwrap().bit_eq(&fuse_values(&b, &a).unwrap()));
        let c = Tensor::zeros(&[8, 16, 4, 4]);
        assert!(fuse_values(&a, &c).is_err());
    }

    #[test]
    fn content_encoder_gradients() {
        let dims = tiny();
        let mut e1 = ContentEncoder::init(&dims, 3).unwrap();
        // A nonzero head so every parameter receives gradient.
        let head = Tensor::randn(&[32, 3], 0.3, &mut Rng::new(8));
        e1.params.set("e1.head.w", head).unwrap();
        let x = Tensor::randn(&[2, 3, 8, 8], 1.0, &mut Rng::new(6));
        let report = check_param_gradients(&e1.params, &[x], 11, 24, |g, p, extra| {
            let w = e1.forward(g, p, extra[0])?;
            let sq = g.square(w)?;
            g.sum_all(sq)
        })
        .unwrap();
        assert!(report.max_relative_error <= 1e-5, "{report:?}");
    }

    #[test]
    fn appearance_encoder_gradients_one_head() {
        let dims = tiny();
        let e2 = AppearanceEncoder::with_heads(&dims, 1, 4).unwrap();
        let x = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut Rng::new(12));
        let report = check_param_gradients(&e2.params, &[x], 13, 24, |g, p, extra| {
            let h = e2.forward(g, p, extra[0])?;
            let sq = g.square(h)?;
            g.sum_all(sq)
        })
        .unwrap();
        assert!(report.max_relative_error <= 1e-5, "{report:?}");
    }
}
