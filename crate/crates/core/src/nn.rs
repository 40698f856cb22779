//! Small layer helpers shared by the networks. Parameters follow the naming
//! convention `{prefix}.w` / `{prefix}.b`.

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Bound, ConvGeom, Graph, NodeId, ParamStore, Tensor};

pub(crate) fn init_conv(
    store: &mut ParamStore,
    prefix: &str,
    cout: usize,
    cin: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<()> {
    let std = (2.0 / (cin * k * k) as f64).sqrt();
    store.insert(format!("{prefix}.w"), Tensor::randn(&[cout, cin, k, k], std, rng))?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[cout]))
}

pub(crate) fn init_linear(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    std: f64,
    rng: &mut Rng,
) -> Result<()> {
    store.insert(format!("{prefix}.w"), Tensor::randn(&[fan_in, fan_out], std, rng))?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]))
}

/// Adds a per-channel bias `[C]` to `[B, C, H, W]`.
pub(crate) fn channel_bias(g: &mut Graph, x: NodeId, bias: NodeId) -> Result<NodeId> {
    let c = g.shape(bias)[0];
    let b = g.reshape(bias, &[1, c, 1, 1])?;
    g.add(x, b)
}

pub(crate) fn conv(g: &mut Graph, p: &Bound, prefix: &str, x: NodeId, geom: ConvGeom) -> Result<NodeId> {
    let y = g.conv2d(x, p.id(&format!("{prefix}.w"))?, geom)?;
    channel_bias(g, y, p.id(&format!("{prefix}.b"))?)
}

pub(crate) fn conv_act(g: &mut Graph, p: &Bound, prefix: &str, x: NodeId, geom: ConvGeom) -> Result<NodeId> {
    let y = conv(g, p, prefix, x, geom)?;
    g.leaky_relu(y)
}

/// `x · W + b` for `x: [B, in]`.
pub(crate) fn linear(g: &mut Graph, p: &Bound, prefix: &str, x: NodeId) -> Result<NodeId> {
    let y = g.matmul(x, p.id(&format!("{prefix}.w"))?)?;
    g.add(y, p.id(&format!("{prefix}.b"))?)
}

/// Mean over the two spatial axes of `[B, C, H, W]`, giving `[B, C]`.
pub(crate) fn spatial_mean(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    g.reduce_mean(x, &[2, 3])
}
