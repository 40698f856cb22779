use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::{proxy_scores, ProxyFeatureNet};
use crate::tensor::Tensor;

/// Standard five-scale MS-SSIM exponents; the first `scales` are used and
/// renormalised to sum to one.
const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW_RADIUS: usize = 5;
const WINDOW_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSettings {
    pub scales: usize,
    pub c1: f64,
    pub c2: f64,
}

impl MetricSettings {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        MetricSettings {
            scales: cfg.ms_ssim_scales,
            c1: cfg.ssim_c1,
            c2: cfg.ssim_c2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub l2: f64,
    /// dB; `f64::INFINITY` when `l2 == 0`.
    pub psnr: f64,
    pub ms_ssim: f64,
    pub lpips_proxy: f64,
    pub id_proxy: f64,
    pub seconds: f64,
}

impl MetricsRow {
    /// Column-wise mean; `None` for an empty slice.
    pub fn mean(rows: &[MetricsRow]) -> Option<MetricsRow> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(MetricsRow {
            l2: avg(|r| r.l2),
            psnr: avg(|r| r.psnr),
            ms_ssim: avg(|r| r.ms_ssim),
            lpips_proxy: avg(|r| r.lpips_proxy),
            id_proxy: avg(|r| r.id_proxy),
            seconds: avg(|r| r.seconds),
        })
    }
}

pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn check(op: &'static str, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::shape(op, x.shape(), y.shape()));
    }
    Ok(())
}

/// Mean squared error after mapping both images from [−1, 1] to [0, 1].
pub fn l2_unit(x: &Tensor, y: &Tensor) -> Result<f64> {
    check("l2", x, y)?;
    let s: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| {
            let d = (a - b) * 0.5;
            d * d
        })
        .sum();
    Ok(s / x.len() as f64)
}

/// 10·log10(1 / l2) for images on a unit range.
pub fn psnr(l2: f64) -> f64 {
    if l2 == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / l2).log10()
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur of an `h × w` plane; taps falling outside the
/// plane are dropped and the remaining weights renormalised.
fn blur(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if along_x { (x, w) } else { (y, h) };
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, &k) in win.iter().enumerate() {
                    let q = pos as isize + t as isize - r;
                    if q < 0 || q >= len as isize {
                        continue;
                    }
                    let v = if along_x {
                        src[y * w + q as usize]
                    } else {
                        src[q as usize * w + x]
                    };
                    acc += k * v;
                    norm += k;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

/// Mean SSIM and mean contrast-structure term of two `[C, H, W]` images on
/// the unit range.
fn ssim_terms(x: &[f64], y: &[f64], c: usize, h: usize, w: usize, s: &MetricSettings) -> (f64, f64) {
    let win = gaussian_window();
    let hw = h * w;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for ch in 0..c {
        let px = &x[ch * hw..(ch + 1) * hw];
        let py = &y[ch * hw..(ch + 1) * hw];
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mx = blur(px, h, w, &win);
        let my = blur(py, h, w, &win);
        let exx = blur(&prod(px, px), h, w, &win);
        let eyy = blur(&prod(py, py), h, w, &win);
        let exy = blur(&prod(px, py), h, w, &win);
        for i in 0..hw {
            let (a, b) = (mx[i], my[i]);
            let vx = exx[i] - a * a;
            let vy = eyy[i] - b * b;
            let cov = exy[i] - a * b;
            let l = (2.0 * a * b + s.c1) / (a * a + b * b + s.c1);
            let k = (2.0 * cov + s.c2) / (vx + vy + s.c2);
            ssim += l * k;
            cs += k;
        }
    }
    let n = (c * hw) as f64;
    (ssim / n, cs / n)
}

fn avg_pool2(img: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let at = |dy: usize, dx: usize| img[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                out[(ch * ho + y) * wo + x] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * 0.25;
            }
        }
    }
    out
}

/// Multi-scale SSIM of two `[C, H, W]` images in [−1, 1].
pub fn ms_ssim(x: &Tensor, y: &Tensor, settings: &MetricSettings) -> Result<f64> {
    check("ms_ssim", x, y)?;
    let &[c, mut h, mut w] = x.shape() else {
        return Err(Error::shape("ms_ssim", x.shape(), &[3, 0, 0]));
    };
    let scales = settings.scales;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() || h >> (scales - 1) == 0 || w >> (scales - 1) == 0 {
        return Err(Error::InvalidArgument(format!(
            "{scales} MS-SSIM scales for a {h}x{w} image"
        )));
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let unit = |t: &Tensor| t.data().iter().map(|v| (v + 1.0) * 0.5).collect::<Vec<f64>>();
    let (mut a, mut b) = (unit(x), unit(y));
    let mut out = 1.0;
    for (s, &wt) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b, c, h, w, settings);
        let term = if s + 1 == scales { ssim } else { cs };
        out *= term.max(0.0).powf(wt / total);
        if s + 1 < scales {
            a = avg_pool2(&a, c, h, w);
            b = avg_pool2(&b, c, h, w);
            h /= 2;
            w /= 2;
        }
    }
    Ok(out)
}

/// All reconstruction metrics of one `[3, R, R]` image pair; `seconds` is
/// left at zero for the caller to fill in.
pub fn metrics(x: &Tensor, xhat: &Tensor, proxy: &ProxyFeatureNet, settings: &MetricSettings) -> Result<MetricsRow> {
    check("metrics", x, xhat)?;
    let l2 = l2_unit(x, xhat)?;
    let (lpips_proxy, id_proxy) = proxy_scores(proxy, x, xhat)?;
    Ok(MetricsRow {
        l2,
        psnr: psnr(l2),
        ms_ssim: ms_ssim(x, xhat, settings)?,
        lpips_proxy,
        id_proxy,
        seconds: 0.0,
    })
}
