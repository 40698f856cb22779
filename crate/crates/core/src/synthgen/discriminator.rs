use crate::config::ToyDims;
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::Rng;
use crate::tensor::{Bound, ConvGeom, Graph, NodeId, ParamStore, Tensor};

/// Strided-conv discriminator producing one logit per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub resolution: usize,
    pub params: ParamStore,
}

/// Channel widths of the conv stack; the first layer keeps full resolution,
/// every later layer halves it.
const WIDTHS: [usize; 4] = [16, 32, 64, 64];

impl Discriminator {
    pub fn init(dims: &ToyDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::derive(seed, 0xd15c);
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (l, &cout) in WIDTHS.iter().enumerate() {
            nn::init_conv(&mut params, &format!("conv{l}"), cout, cin, 3, &mut rng)?;
            cin = cout;
        }
        nn::init_linear(&mut params, "fc", cin, 1, (1.0 / cin as f64).sqrt(), &mut rng)?;
        Ok(Discriminator {
            resolution: dims.resolution,
            params,
        })
    }

    pub fn from_params(resolution: usize, params: ParamStore) -> Result<Self> {
        params.get("fc.w")?;
        Ok(Discriminator { resolution, params })
    }

    /// Logits `[B, 1]` for images `[B, 3, R, R]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, images: NodeId) -> Result<NodeId> {
        let s = g.shape(images);
        if s.len() != 4 || s[1] != 3 || s[2] != self.resolution || s[3] != self.resolution {
            return Err(Error::shape(
                "discriminate",
                s,
                &[0, 3, self.resolution, self.resolution],
            ));
        }
        let mut x = images;
        for l in 0..WIDTHS.len() {
            let geom = if l == 0 { ConvGeom::SAME3 } else { ConvGeom::DOWN3 };
            x = nn::conv_act(g, p, &format!("conv{l}"), x, geom)?;
        }
        let pooled = nn::spatial_mean(g, x)?;
        nn::linear(g, p, "fc", pooled)
    }

    /// Logit of a single `[3, R, R]` image.
    pub fn discriminate(&self, image: &Tensor) -> Result<f64> {
        let s = image.shape();
        if s.len() != 3 {
            return Err(Error::shape("discriminate", s, &[3, self.resolution, self.resolution]));
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let x = g.leaf(image.reshape(&[1, s[0], s[1], s[2]])?);
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).item())
    }
}
