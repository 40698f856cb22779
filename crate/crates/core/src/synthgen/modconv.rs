use crate::error::{Error, Result};
use crate::tensor::{ConvGeom, Graph, NodeId};

/// Epsilon inside the demodulation square root.
pub const DEMOD_EPS: f64 = 1e-8;

/// Style-modulated convolution.
///
/// `x: [B, I, H, W]`, `kernel: [O, I, k, k]` or per-sample `[B, O, I, k, k]`,
/// `styles: [B, I]`. The kernel is scaled per input channel by the styles; with
/// `demodulate` each output filter of the scaled kernel is then rescaled to
/// unit L2 norm. Implemented by scaling activations rather than kernels, which
/// is algebraically identical and keeps the shared-kernel case a single
/// convolution.
pub fn modulated_conv2d(g: &mut Graph, x: NodeId, kernel: NodeId, styles: NodeId, demodulate: bool) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    let ks = g.shape(kernel).to_vec();
    let ss = g.shape(styles).to_vec();
    if xs.len() != 4 || ss.len() != 2 || ss[0] != xs[0] || ss[1] != xs[1] || ks.len() < 4 {
        return Err(Error::shape("modulated_conv2d", &xs, &ss));
    }
    let (batch, cin) = (xs[0], xs[1]);
    let k = ks[ks.len() - 1];
    let s4 = g.reshape(styles, &[batch, cin, 1, 1])?;
    let xm = g.mul(x, s4)?;
    let y = g.conv2d(xm, kernel, ConvGeom { stride: 1, pad: k / 2 })?;
    if !demodulate {
        return Ok(y);
    }
    let rank = ks.len();
    let ksq = g.square(kernel)?;
    let per_in = g.reduce_sum(ksq, &[rank - 2, rank - 1])?; // [O, I] or [B, O, I]
    let s2 = g.square(styles)?;
    let s2 = g.reshape(s2, &[batch, 1, cin])?;
    let weighted = g.mul(per_in, s2)?; // [B, O, I]
    let norm2 = g.reduce_sum(weighted, &[2])?; // [B, O]
    let norm2 = g.add_scalar(norm2, DEMOD_EPS)?;
    let norm = g.sqrt(norm2)?;
    let inv = g.recip(norm)?;
    let cout = g.shape(inv)[1];
    let inv = g.reshape(inv, &[batch, cout, 1, 1])?;
    g.mul(y, inv)
}
