//! Raw numeric kernels on flat row-major buffers. Everything here is
//! single-threaded with a fixed accumulation order.

use crate::error::{Error, Result};
use crate::tensor::value::{numel, Tensor};

/// `c = a·b` (or `c += a·b`) for row-major `a: m×k`, `b: k×n`; either operand
/// may be read transposed from its stored layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the strides above describe exactly the m×k, k×n and m×n
    // row-major extents whose lengths are asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::shape("matmul", sa, sb));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
    Tensor::new(vec![m, n], out)
}

pub(crate) fn transpose2d(a: &Tensor) -> Result<Tensor> {
    let s = a.shape();
    if s.len() != 2 {
        return Err(Error::shape("transpose", s, &[0, 0]));
    }
    let (r, c) = (s[0], s[1]);
    let src = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out)
}

/// Stride and zero padding shared by all three convolution kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub const SAME3: ConvGeom = ConvGeom { stride: 1, pad: 1 };
    pub const POINTWISE: ConvGeom = ConvGeom { stride: 1, pad: 0 };
    pub const DOWN3: ConvGeom = ConvGeom { stride: 2, pad: 1 };

    pub fn out_size(&self, size: usize, k: usize) -> Option<usize> {
        let padded = size + 2 * self.pad;
        (padded >= k).then(|| (padded - k) / self.stride + 1)
    }

    fn is_identity(&self, kh: usize, kw: usize) -> bool {
        kh == 1 && kw == 1 && self.stride == 1 && self.pad == 0
    }
}

struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    per_sample: bool,
}

impl ConvDims {
    fn ckk(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn kernel_len(&self) -> usize {
        self.cout * self.ckk()
    }
    fn kernel_shape(&self) -> Vec<usize> {
        let mut s = vec![self.cout, self.cin, self.kh, self.kw];
        if self.per_sample {
            s.insert(0, self.batch);
        }
        s
    }
}

/// Validates a kernel `[O,C,kh,kw]` (shared) or `[B,O,C,kh,kw]` (per sample)
/// against an input of shape `[B,C,H,W]`.
fn kernel_dims(op: &'static str, x_shape: &[usize], k_shape: &[usize], geom: ConvGeom) -> Result<ConvDims> {
    if x_shape.len() != 4 {
        return Err(Error::shape(op, x_shape, k_shape));
    }
    let (batch, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (per_sample, ks) = match k_shape.len() {
        4 => (false, k_shape),
        5 if k_shape[0] == batch => (true, &k_shape[1..]),
        _ => return Err(Error::shape(op, x_shape, k_shape)),
    };
    if ks[1] != cin {
        return Err(Error::shape(op, x_shape, k_shape));
    }
    let (ho, wo) = match (geom.out_size(h, ks[2]), geom.out_size(w, ks[3])) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::shape(op, x_shape, k_shape)),
    };
    Ok(ConvDims {
        batch,
        cin,
        h,
        w,
        cout: ks[0],
        kh: ks[2],
        kw: ks[3],
        ho,
        wo,
        per_sample,
    })
}

fn im2col(x: &[f64], d: &ConvDims, geom: ConvGeom, cols: &mut [f64]) {
    let hw = d.ho * d.wo;
    let (s, p) = (geom.stride, geom.pad as isize);
    for c in 0..d.cin {
        let plane = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                // Output columns whose input column lies inside the image.
                let shift = kj as isize - p;
                let lo = ((-shift).max(0) as usize).div_ceil(s).min(d.wo);
                let hi = (((d.w as isize - shift) as usize).div_ceil(s)).clamp(lo, d.wo);
                for oy in 0..d.ho {
                    let iy = (oy * s + ki) as isize - p;
                    let line = &mut dst[oy * d.wo..(oy + 1) * d.wo];
                    if iy < 0 || iy >= d.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    let start = (lo * s) as isize + shift;
                    if s == 1 {
                        line[lo..hi].copy_from_slice(&src[start as usize..start as usize + (hi - lo)]);
                    } else {
                        for (i, v) in line[lo..hi].iter_mut().enumerate() {
                            *v = src[start as usize + i * s];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], d: &ConvDims, geom: ConvGeom, x: &mut [f64]) {
    let hw = d.ho * d.wo;
    let (s, p) = (geom.stride as isize, geom.pad as isize);
    for c in 0..d.cin {
        let plane = &mut x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..d.ho {
                    let iy = oy as isize * s + ki as isize - p;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..d.wo {
                        let ix = ox as isize * s + kj as isize - p;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] += src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d(x: &Tensor, k: &Tensor, geom: ConvGeom) -> Result<Tensor> {
    let d = kernel_dims("conv2d", x.shape(), k.shape(), geom)?;
    let (in_len, out_len, hw) = (d.cin * d.h * d.w, d.cout * d.ho * d.wo, d.ho * d.wo);
    let identity = geom.is_identity(d.kh, d.kw);
    let mut cols = if identity { Vec::new() } else { vec![0.0; d.ckk() * hw] };
    let mut out = vec![0.0; d.batch * out_len];
    for b in 0..d.batch {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let kb = if d.per_sample {
            &k.data()[b * d.kernel_len()..(b + 1) * d.kernel_len()]
        } else {
            k.data()
        };
        let src: &[f64] = if identity {
            xb
        } else {
            im2col(xb, &d, geom, &mut cols);
            &cols
        };
        gemm(
            d.cout,
            d.ckk(),
            hw,
            kb,
            false,
            src,
            false,
            &mut out[b * out_len..(b + 1) * out_len],
            false,
        );
    }
    Tensor::new(vec![d.batch, d.cout, d.ho, d.wo], out)
}

/// Adjoint of [`conv2d`] with respect to its input (a transposed
/// convolution). `in_hw` is the spatial size of the original input.
pub(crate) fn conv2d_input_grad(g: &Tensor, k: &Tensor, geom: ConvGeom, in_hw: (usize, usize)) -> Result<Tensor> {
    let gs = g.shape();
    let ks = k.shape();
    if gs.len() != 4 || ks.len() < 4 {
        return Err(Error::shape("conv2d_input_grad", gs, ks));
    }
    let cin = ks[ks.len() - 3];
    let x_shape = [gs[0], cin, in_hw.0, in_hw.1];
    let d = kernel_dims("conv2d_input_grad", &x_shape, ks, geom)?;
    if d.cout != gs[1] || d.ho != gs[2] || d.wo != gs[3] {
        return Err(Error::shape("conv2d_input_grad", gs, ks));
    }
    let (in_len, out_len, hw) = (d.cin * d.h * d.w, d.cout * d.ho * d.wo, d.ho * d.wo);
    let identity = geom.is_identity(d.kh, d.kw);
    let mut cols = if identity { Vec::new() } else { vec![0.0; d.ckk() * hw] };
    let mut dx = vec![0.0; d.batch * in_len];
    for b in 0..d.batch {
        let gb = &g.data()[b * out_len..(b + 1) * out_len];
        let kb = if d.per_sample {
            &k.data()[b * d.kernel_len()..(b + 1) * d.kernel_len()]
        } else {
            k.data()
        };
        let dxb = &mut dx[b * in_len..(b + 1) * in_len];
        if identity {
            gemm(d.ckk(), d.cout, hw, kb, true, gb, false, dxb, false);
        } else {
            gemm(d.ckk(), d.cout, hw, kb, true, gb, false, &mut cols, false);
            col2im(&cols, &d, geom, dxb);
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Adjoint of [`conv2d`] with respect to its kernel. With `per_sample` the
/// result keeps a leading batch axis; otherwise samples are summed in order.
pub(crate) fn conv2d_weight_grad(
    x: &Tensor,
    g: &Tensor,
    geom: ConvGeom,
    kernel_hw: (usize, usize),
    per_sample: bool,
) -> Result<Tensor> {
    let xs = x.shape();
    let gs = g.shape();
    if xs.len() != 4 || gs.len() != 4 || xs[0] != gs[0] {
        return Err(Error::shape("conv2d_weight_grad", xs, gs));
    }
    let mut k_shape = vec![gs[1], xs[1], kernel_hw.0, kernel_hw.1];
    if per_sample {
        k_shape.insert(0, xs[0]);
    }
    let d = kernel_dims("conv2d_weight_grad", xs, &k_shape, geom)?;
    if d.ho != gs[2] || d.wo != gs[3] {
        return Err(Error::shape("conv2d_weight_grad", xs, gs));
    }
    let (in_len, out_len, hw) = (d.cin * d.h * d.w, d.cout * d.ho * d.wo, d.ho * d.wo);
    let identity = geom.is_identity(d.kh, d.kw);
    let mut cols = if identity { Vec::new() } else { vec![0.0; d.ckk() * hw] };
    let mut dk = vec![0.0; numel(&d.kernel_shape())];
    for b in 0..d.batch {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let gb = &g.data()[b * out_len..(b + 1) * out_len];
        let src: &[f64] = if identity {
            xb
        } else {
            im2col(xb, &d, geom, &mut cols);
            &cols
        };
        let (dst, acc) = if per_sample {
            (&mut dk[b * d.kernel_len()..(b + 1) * d.kernel_len()], false)
        } else {
            (&mut dk[..], b > 0)
        };
        gemm(d.cout, hw, d.ckk(), gb, false, src, true, dst, acc);
    }
    Tensor::new(d.kernel_shape(), dk)
}

/// Output shape of broadcasting `a` against `b` with trailing alignment.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides that read `shape` as if broadcast to `out` (0 on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let n = out.len();
    let mut strides = vec![0; n];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + n - shape.len();
        strides[oi] = if shape[i] == 1 && out[oi] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Merges adjacent axes that every operand walks contiguously (or
/// broadcasts along together) and drops unit axes, so the innermost loop is
/// as long as possible.
fn collapse(out: &[usize], strides: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut shape: Vec<usize> = Vec::new();
    let mut st: Vec<Vec<usize>> = vec![Vec::new(); strides.len()];
    for axis in 0..out.len() {
        if out[axis] == 1 {
            continue;
        }
        let mergeable = !shape.is_empty()
            && strides
                .iter()
                .zip(&st)
                .all(|(s, c)| *c.last().expect("non-empty") == s[axis] * out[axis]);
        if mergeable {
            *shape.last_mut().expect("non-empty") *= out[axis];
            for (c, s) in st.iter_mut().zip(strides) {
                *c.last_mut().expect("non-empty") = s[axis];
            }
        } else {
            shape.push(out[axis]);
            for (c, s) in st.iter_mut().zip(strides) {
                c.push(s[axis]);
            }
        }
    }
    if shape.is_empty() {
        shape.push(1);
        for c in st.iter_mut() {
            c.push(0);
        }
    }
    (shape, st)
}

/// Visits the output in row-major order as runs along the innermost
/// collapsed axis: `f(flat_start, operand_offsets, run_len, inner_strides)`.
fn for_each_run(out: &[usize], strides: &[Vec<usize>], mut f: impl FnMut(usize, &[usize], usize, &[usize])) {
    let (shape, st) = collapse(out, strides);
    let n = shape.len();
    let run = shape[n - 1];
    let inner: Vec<usize> = st.iter().map(|s| s[n - 1]).collect();
    let outer = numel(&shape[..n - 1]);
    let mut idx = vec![0usize; n - 1];
    let mut offs = vec![0usize; st.len()];
    for r in 0..outer {
        f(r * run, &offs, run, &inner);
        for axis in (0..n - 1).rev() {
            idx[axis] += 1;
            for (o, s) in offs.iter_mut().zip(&st) {
                *o += s[axis];
            }
            if idx[axis] < shape[axis] {
                break;
            }
            for (o, s) in offs.iter_mut().zip(&st) {
                *o -= s[axis] * shape[axis];
            }
            idx[axis] = 0;
        }
    }
}

pub(crate) fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.zip_map(b, op, f);
    }
    let out = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::shape(op, a.shape(), b.shape()))?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let (ad, bd) = (a.data(), b.data());
    let mut data = vec![0.0; numel(&out)];
    for_each_run(&out, &[sa, sb], |flat, o, n, s| {
        let dst = &mut data[flat..flat + n];
        match (s[0], s[1]) {
            (1, 1) => {
                for ((d, &p), &q) in dst.iter_mut().zip(&ad[o[0]..o[0] + n]).zip(&bd[o[1]..o[1] + n]) {
                    *d = f(p, q);
                }
            }
            (1, 0) => {
                let q = bd[o[1]];
                for (d, &p) in dst.iter_mut().zip(&ad[o[0]..o[0] + n]) {
                    *d = f(p, q);
                }
            }
            (0, 1) => {
                let p = ad[o[0]];
                for (d, &q) in dst.iter_mut().zip(&bd[o[1]..o[1] + n]) {
                    *d = f(p, q);
                }
            }
            (x, y) => {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = f(ad[o[0] + j * x], bd[o[1] + j * y]);
                }
            }
        }
    });
    Tensor::new(out, data)
}

pub(crate) fn broadcast_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if broadcast_shape(a.shape(), shape).as_deref() != Some(shape) {
        return Err(Error::shape("broadcast_to", a.shape(), shape));
    }
    if a.shape() == shape {
        return Ok(a.clone());
    }
    let sa = broadcast_strides(a.shape(), shape);
    let ad = a.data();
    let mut data = vec![0.0; numel(shape)];
    for_each_run(shape, &[sa], |flat, o, n, s| {
        let dst = &mut data[flat..flat + n];
        if s[0] == 0 {
            dst.fill(ad[o[0]]);
        } else {
            for (j, d) in dst.iter_mut().enumerate() {
                *d = ad[o[0] + j * s[0]];
            }
        }
    });
    Tensor::new(shape.to_vec(), data)
}

/// Sums `a` down to `shape`, the adjoint of [`broadcast_to`]. Each output
/// element accumulates its inputs in row-major order.
pub(crate) fn sum_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if broadcast_shape(shape, a.shape()).as_deref() != Some(a.shape()) {
        return Err(Error::shape("sum_to", a.shape(), shape));
    }
    if a.shape() == shape {
        return Ok(a.clone());
    }
    let so = broadcast_strides(shape, a.shape());
    let ad = a.data();
    let mut data = vec![0.0; numel(shape)];
    for_each_run(a.shape(), &[so], |flat, o, n, s| {
        let src = &ad[flat..flat + n];
        if s[0] == 0 {
            let mut acc = data[o[0]];
            for &v in src {
                acc += v;
            }
            data[o[0]] = acc;
        } else {
            for (j, &v) in src.iter().enumerate() {
                data[o[0] + j * s[0]] += v;
            }
        }
    });
    Tensor::new(shape.to_vec(), data)
}

fn spatial(op: &'static str, s: &[usize]) -> Result<(usize, usize, usize)> {
    if s.len() < 2 {
        return Err(Error::shape(op, s, &[2, 2]));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok((numel(&s[..s.len() - 2]), h, w))
}

pub(crate) fn upsample2x(a: &Tensor) -> Result<Tensor> {
    let (planes, h, w) = spatial("upsample2x", a.shape())?;
    let src = a.data();
    let mut out = vec![0.0; planes * 4 * h * w];
    for p in 0..planes {
        for y in 0..2 * h {
            let srow = &src[p * h * w + (y / 2) * w..][..w];
            let drow = &mut out[p * 4 * h * w + y * 2 * w..][..2 * w];
            for x in 0..2 * w {
                drow[x] = srow[x / 2];
            }
        }
    }
    let mut shape = a.shape().to_vec();
    let n = shape.len();
    shape[n - 2] *= 2;
    shape[n - 1] *= 2;
    Tensor::new(shape, out)
}

pub(crate) fn sum_pool2x(a: &Tensor) -> Result<Tensor> {
    let (planes, h, w) = spatial("sum_pool2x", a.shape())?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("sum_pool2x", a.shape(), &[2, 2]));
    }
    let (ho, wo) = (h / 2, w / 2);
    let src = a.data();
    let mut out = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        for y in 0..ho {
            for x in 0..wo {
                let base = p * h * w + 2 * y * w + 2 * x;
                out[p * ho * wo + y * wo + x] = src[base] + src[base + 1] + src[base + w] + src[base + w + 1];
            }
        }
    }
    let mut shape = a.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = ho;
    shape[n - 1] = wo;
    Tensor::new(shape, out)
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    (numel(&shape[..axis]), numel(&shape[axis + 1..]))
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts[0].shape();
    if axis >= first.len() {
        return Err(Error::shape("concat", first, first));
    }
    let mut total = 0;
    for p in parts {
        let s = p.shape();
        if s.len() != first.len() || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i]) {
            return Err(Error::shape("concat", first, s));
        }
        total += s[axis];
    }
    let mut shape = first.to_vec();
    shape[axis] = total;
    let (outer, inner) = split_axis(first, axis);
    let mut data = Vec::with_capacity(numel(&shape));
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Tensor::new(shape, data)
}

pub(crate) fn slice(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let s = a.shape();
    if axis >= s.len() || len == 0 || start + len > s[axis] {
        return Err(Error::shape("slice", s, &[start, len]));
    }
    let (outer, inner) = split_axis(s, axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * s[axis] + start) * inner;
        data.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = s.to_vec();
    shape[axis] = len;
    Tensor::new(shape, data)
}

/// Places `a` at `start` along `axis` inside zeros of extent `full`.
pub(crate) fn embed(a: &Tensor, axis: usize, start: usize, full: usize) -> Result<Tensor> {
    let s = a.shape();
    if axis >= s.len() || start + s[axis] > full {
        return Err(Error::shape("embed", s, &[start, full]));
    }
    let (outer, inner) = split_axis(s, axis);
    let mut shape = s.to_vec();
    shape[axis] = full;
    let mut data = vec![0.0; numel(&shape)];
    let chunk = s[axis] * inner;
    for o in 0..outer {
        let base = (o * full + start) * inner;
        data[base..base + chunk].copy_from_slice(&a.data()[o * chunk..(o + 1) * chunk]);
    }
    Tensor::new(shape, data)
}
