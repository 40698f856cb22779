//! Reconstruction, adversarial and discriminator losses, built as graph nodes.

use crate::config::LossConfig;
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::Rng;
use crate::tensor::{Bound, ConvGeom, Graph, NodeId, ParamStore, Tensor};

/// Frozen random conv features standing in for pretrained perceptual and
/// identity extractors. Three stages (full, 1/2, 1/4 resolution) plus a
/// pooled deep embedding with a bias, so embeddings are never all-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyFeatureNet {
    pub seed: u64,
    pub params: ParamStore,
}

const PROXY_WIDTHS: [usize; 3] = [16, 32, 32];
const PROXY_EMBED: usize = 32;

pub struct ProxyFeatures {
    pub stages: Vec<NodeId>,
    /// `[B, PROXY_EMBED]`
    pub deep: NodeId,
}

impl ProxyFeatureNet {
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = Rng::derive(seed, 0x9e7);
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (s, &cout) in PROXY_WIDTHS.iter().enumerate() {
            nn::init_conv(&mut params, &format!("stage{s}"), cout, cin, 3, &mut rng)?;
            cin = cout;
        }
        params.insert(
            "embed.w",
            Tensor::randn(&[cin, PROXY_EMBED], (1.0 / cin as f64).sqrt(), &mut rng),
        )?;
        params.insert("embed.b", Tensor::randn(&[PROXY_EMBED], 1.0, &mut rng))?;
        Ok(ProxyFeatureNet { seed, params })
    }

    pub fn features(&self, g: &mut Graph, p: &Bound, images: NodeId) -> Result<ProxyFeatures> {
        let mut x = images;
        let mut stages = Vec::with_capacity(PROXY_WIDTHS.len());
        for s in 0..PROXY_WIDTHS.len() {
            let geom = if s == 0 { ConvGeom::SAME3 } else { ConvGeom::DOWN3 };
            x = nn::conv_act(g, p, &format!("stage{s}"), x, geom)?;
            stages.push(x);
        }
        let pooled = nn::spatial_mean(g, x)?;
        let deep = nn::linear(g, p, "embed", pooled)?;
        Ok(ProxyFeatures { stages, deep })
    }
}

/// Per-sample cosine similarity of two `[B, E]` embeddings, as `[B]`.
pub fn cosine_rows(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let ab = g.mul(a, b)?;
    let dot = g.reduce_sum(ab, &[1])?;
    let a2 = g.square(a)?;
    let na = g.reduce_sum(a2, &[1])?;
    let b2 = g.square(b)?;
    let nb = g.reduce_sum(b2, &[1])?;
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): equal inputs give exactly 1.
    let prod = g.mul(na, nb)?;
    let denom = g.sqrt(prod)?;
    g.div(dot, denom)
}

/// Reconstruction loss and its weighted components (all `[1]` nodes).
pub struct RecLoss {
    pub total: NodeId,
    pub l2: NodeId,
    pub perc: NodeId,
    pub id: NodeId,
}

fn mse(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let d = g.sub(a, b)?;
    let sq = g.square(d)?;
    g.mean_all(sq)
}

/// λ_pixel·L2 + λ_perc·Σ_stages MSE(F(x), F(x̂)) + λ_id·(1 − cos(F_deep(x), F_deep(x̂))).
pub fn rec_loss(
    g: &mut Graph,
    proxy: &ProxyFeatureNet,
    pp: &Bound,
    x: NodeId,
    xhat: NodeId,
    cfg: &LossConfig,
) -> Result<RecLoss> {
    if g.shape(x) != g.shape(xhat) {
        return Err(Error::shape("rec_loss", g.shape(x), g.shape(xhat)));
    }
    let l2 = mse(g, x, xhat)?;
    let fx = proxy.features(g, pp, x)?;
    let fy = proxy.features(g, pp, xhat)?;
    let mut perc = None;
    for (a, b) in fx.stages.iter().zip(&fy.stages) {
        let m = mse(g, *a, *b)?;
        perc = Some(match perc {
            None => m,
            Some(prev) => g.add(prev, m)?,
        });
    }
    let perc = perc.expect("proxy has stages");
    let cos = cosine_rows(g, fx.deep, fy.deep)?;
    let one_minus = {
        let neg = g.scale(cos, -1.0)?;
        g.add_scalar(neg, 1.0)?
    };
    let id = g.mean_all(one_minus)?;
    let t1 = g.scale(l2, cfg.lambda_pixel)?;
    let t2 = g.scale(perc, cfg.lambda_perc)?;
    let t3 = g.scale(id, cfg.lambda_id)?;
    let s = g.add(t1, t2)?;
    let total = g.add(s, t3)?;
    Ok(RecLoss { total, l2, perc, id })
}

/// Cosine similarity of the proxy identity embeddings of two images.
pub fn id_similarity(proxy: &ProxyFeatureNet, x: &Tensor, xhat: &Tensor) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::shape("id_similarity", x.shape(), xhat.shape()));
    }
    let mut g = Graph::new();
    let pp = proxy.params.bind(&mut g);
    let batched = |t: &Tensor| -> Result<Tensor> {
        if t.shape().len() == 3 {
            let s = t.shape();
            t.reshape(&[1, s[0], s[1], s[2]])
        } else {
            Ok(t.clone())
        }
    };
    let a = g.leaf(batched(x)?);
    let b = g.leaf(batched(xhat)?);
    let fa = proxy.features(&mut g, &pp, a)?;
    let fb = proxy.features(&mut g, &pp, b)?;
    embedding_similarity(g.value(fa.deep), g.value(fb.deep))
}

/// Perceptual distance (summed per-stage feature MSE) and identity cosine of
/// two images or batches, from one pass of the proxy network each.
pub fn proxy_scores(proxy: &ProxyFeatureNet, x: &Tensor, xhat: &Tensor) -> Result<(f64, f64)> {
    if x.shape() != xhat.shape() {
        return Err(Error::shape("proxy_scores", x.shape(), xhat.shape()));
    }
    let batched = |t: &Tensor| -> Result<Tensor> {
        match t.shape() {
            [c, h, w] => t.reshape(&[1, *c, *h, *w]),
            _ => Ok(t.clone()),
        }
    };
    let mut g = Graph::new();
    let pp = proxy.params.bind(&mut g);
    let a = g.leaf(batched(x)?);
    let b = g.leaf(batched(xhat)?);
    let fa = proxy.features(&mut g, &pp, a)?;
    let fb = proxy.features(&mut g, &pp, b)?;
    let mut perc = 0.0;
    for (&sa, &sb) in fa.stages.iter().zip(&fb.stages) {
        let (va, vb) = (g.value(sa), g.value(sb));
        perc += va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            / va.len() as f64;
    }
    let id = embedding_similarity(g.value(fa.deep), g.value(fb.deep))?;
    Ok((perc, id))
}

/// Mean row-wise cosine of two `[B, E]` embeddings; zero-norm rows are an error.
pub fn embedding_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.shape().len() != 2 {
        return Err(Error::shape("embedding_similarity", a.shape(), b.shape()));
    }
    let e = a.shape()[1];
    let mut total = 0.0;
    for (ra, rb) in a.data().chunks(e).zip(b.data().chunks(e)) {
        let dot: f64 = ra.iter().zip(rb).map(|(p, q)| p * q).sum();
        let na: f64 = ra.iter().map(|v| v * v).sum();
        let nb: f64 = rb.iter().map(|v| v * v).sum();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::InvalidArgument("zero-norm identity embedding".into()));
        }
        total += dot / (na * nb).sqrt();
    }
    Ok(total / a.shape()[0] as f64)
}

/// Non-saturating generator loss: mean softplus(−logit) = −mean log σ(logit).
pub fn adv_loss_g(g: &mut Graph, fake_logits: NodeId) -> Result<NodeId> {
    let neg = g.scale(fake_logits, -1.0)?;
    let sp = g.softplus(neg)?;
    g.mean_all(sp)
}

/// (γ/2)·mean_b ‖∇_x D(x_b)‖². `real` must be a leaf of `g`; the gradient
/// is built as graph nodes so the result differentiates into D's parameters.
pub fn r1_penalty<D>(g: &mut Graph, real: NodeId, r1_gamma: f64, disc: D) -> Result<NodeId>
where
    D: FnOnce(&mut Graph, NodeId) -> Result<NodeId>,
{
    let logits = disc(g, real)?;
    r1_from_logits(g, real, logits, r1_gamma)
}

fn r1_from_logits(g: &mut Graph, real: NodeId, logits: NodeId, r1_gamma: f64) -> Result<NodeId> {
    let total = g.sum_all(logits)?;
    let grad = g.backward(total, &[real])?[0];
    let sq = g.square(grad)?;
    let batch = g.shape(real)[0];
    let per_sample = g.reshape(sq, &[batch, g.value(sq).len() / batch])?;
    let norms = g.reduce_sum(per_sample, &[1])?;
    let mean = g.mean_all(norms)?;
    g.scale(mean, r1_gamma / 2.0)
}

/// Discriminator loss and its components.
pub struct DLoss {
    pub total: NodeId,
    pub adversarial: NodeId,
    pub r1: NodeId,
}

/// −mean log σ(D(real)) − mean log(1 − σ(D(fake))) + R1(real).
///
/// `fake` is detached here, so no gradient reaches whatever produced it.
pub fn d_loss<D>(g: &mut Graph, real: NodeId, fake: NodeId, r1_gamma: f64, disc: D) -> Result<DLoss>
where
    D: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    if g.shape(real) != g.shape(fake) {
        return Err(Error::shape("d_loss", g.shape(real), g.shape(fake)));
    }
    let fake = g.detach(fake);
    let real = g.detach(real);
    let real_logits = disc(g, real)?;
    let fake_logits = disc(g, fake)?;
    let neg = g.scale(real_logits, -1.0)?;
    let sp_real = g.softplus(neg)?;
    let real_term = g.mean_all(sp_real)?;
    let sp_fake = g.softplus(fake_logits)?;
    let fake_term = g.mean_all(sp_fake)?;
    let adversarial = g.add(real_term, fake_term)?;
    let r1 = if r1_gamma > 0.0 {
        r1_from_logits(g, real, real_logits, r1_gamma)?
    } else {
        g.leaf(Tensor::scalar(0.0))
    };
    let total = g.add(adversarial, r1)?;
    Ok(DLoss { total, adversarial, r1 })
}

/// L_rec + λ_adv·L_adv; exactly L_rec when λ_adv is zero.
pub fn enc_loss(
    g: &mut Graph,
    rec: &RecLoss,
    fake_logits: Option<NodeId>,
    lambda_adv: f64,
) -> Result<(NodeId, Option<NodeId>)> {
    match fake_logits {
        Some(logits) if lambda_adv != 0.0 => {
            let adv = adv_loss_g(g, logits)?;
            let weighted = g.scale(adv, lambda_adv)?;
            Ok((g.add(rec.total, weighted)?, Some(adv)))
        }
        _ => Ok((rec.total, None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;
    use crate::tensor::check_gradients;

    fn proxy() -> ProxyFeatureNet {
        ProxyFeatureNet::new(0x5eed).unwrap()
    }

    fn rec_value(x: &Tensor, y: &Tensor, cfg: &LossConfig) -> f64 {
        let p = proxy();
        let mut g = Graph::new();
        let pp = p.params.bind(&mut g);
        let a = g.leaf(x.clone());
        let b = g.leaf(y.clone());
        let r = rec_loss(&mut g, &p, &pp, a, b, cfg).unwrap();
        g.value(r.total).item()
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let mut rng = Rng::new(3);
        let x = Tensor::randn(&[2, 3, 8, 8], 0.5, &mut rng);
        assert_eq!(rec_value(&x, &x, &Profile::FacesAnalog.loss()), 0.0);
    }

    #[test]
    fn constant_mse() {
        let cfg = LossConfig {
            lambda_perc: 0.0,
            lambda_id: 0.0,
            ..LossConfig::default()
        };
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        let y = Tensor::full(&[1, 3, 4, 4], 0.5);
        assert_eq!(rec_value(&x, &y, &cfg), 0.25);
    }

    #[test]
    fn rec_loss_symmetric_and_positive() {
        let mut rng = Rng::new(9);
        let cfg = Profile::FacesAnalog.loss();
        let x = Tensor::randn(&[1, 3, 8, 8], 0.5, &mut rng);
        let y = Tensor::randn(&[1, 3, 8, 8], 0.5, &mut rng);
        let a = rec_value(&x, &y, &cfg);
        let b = rec_value(&y, &x, &cfg);
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn id_similarity_cases() {
        let p = proxy();
        let mut rng = Rng::new(4);
        let x = Tensor::randn(&[3, 8, 8], 0.5, &mut rng);
        let y = Tensor::randn(&[3, 8, 8], 0.5, &mut rng);
        assert_eq!(id_similarity(&p, &x, &x).unwrap(), 1.0);
        let ab = id_similarity(&p, &x, &y).unwrap();
        assert_eq!(ab, id_similarity(&p, &y, &x).unwrap());
        let e1 = Tensor::from_slice(&[1, 2], &[1.0, 0.0]).unwrap();
        let e2 = Tensor::from_slice(&[1, 2], &[0.0, 3.0]).unwrap();
        assert_eq!(embedding_similarity(&e1, &e2).unwrap(), 0.0);
        assert!(embedding_similarity(&e1, &Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn adversarial_generator_loss() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::scalar(0.0));
        let loss = adv_loss_g(&mut g, l).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-15);
        let d = g.backward(loss, &[l]).unwrap()[0];
        assert_eq!(g.value(d).item(), -0.5);

        let vals: Vec<f64> = [0.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&v| {
                let mut g = Graph::new();
                let l = g.leaf(Tensor::scalar(v));
                let loss = adv_loss_g(&mut g, l).unwrap();
                g.value(loss).item()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    fn linear_disc(a: Tensor) -> impl Fn(&mut Graph, NodeId) -> Result<NodeId> {
        move |g: &mut Graph, x: NodeId| {
            let an = g.leaf(a.clone());
            let prod = g.mul(x, an)?;
            let b = g.shape(x)[0];
            let flat = g.reshape(prod, &[b, a.len() / b])?;
            g.reduce_sum(flat, &[1])
        }
    }

    #[test]
    fn r1_linear_discriminator() {
        let mut rng = Rng::new(2);
        let a = Tensor::randn(&[1, 3, 2, 2], 1.0, &mut rng);
        let norm2: f64 = a.data().iter().map(|v| v * v).sum();
        let mut g = Graph::new();
        let x = g.leaf(Tensor::randn(&[1, 3, 2, 2], 1.0, &mut rng));
        let r1 = r1_penalty(&mut g, x, 10.0, linear_disc(a)).unwrap();
        assert!((g.value(r1).item() - 5.0 * norm2).abs() < 1e-12);
    }

    #[test]
    fn r1_constant_discriminator() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::ones(&[2, 3, 2, 2]));
        let r1 = r1_penalty(&mut g, x, 10.0, |g, x| {
            let z = g.scale(x, 0.0)?;
            g.reduce_sum(z, &[1, 2, 3])
        })
        .unwrap();
        assert_eq!(g.value(r1).item(), 0.0);
    }

    #[test]
    fn d_loss_reference_values() {
        let fixed = |v: f64| {
            move |g: &mut Graph, x: NodeId| -> Result<NodeId> {
                let b = g.shape(x)[0];
                Ok(g.leaf(Tensor::full(&[b, 1], v)))
            }
        };
        let mut g = Graph::new();
        let real = g.leaf(Tensor::zeros(&[2, 3, 2, 2]));
        let fake = g.leaf(Tensor::zeros(&[2, 3, 2, 2]));
        let d = d_loss(&mut g, real, fake, 0.0, fixed(0.0)).unwrap();
        assert!((g.value(d.total).item() - 2.0 * 2f64.ln()).abs() < 1e-12);

        let sep = |g: &mut Graph, x: NodeId| -> Result<NodeId> {
            // Real images are zeros, fakes are ones.
            let b = g.shape(x)[0];
            let v = if g.value(x).data()[0] == 0.0 { 20.0 } else { -20.0 };
            Ok(g.leaf(Tensor::full(&[b, 1], v)))
        };
        let fake = g.leaf(Tensor::ones(&[2, 3, 2, 2]));
        let d = d_loss(&mut g, real, fake, 0.0, sep).unwrap();
        assert!(g.value(d.total).item() <= 1e-8);
    }

    #[test]
    fn enc_loss_composition() {
        let p = proxy();
        let mut g = Graph::new();
        let pp = p.params.bind(&mut g);
        let x = g.leaf(Tensor::full(&[1, 3, 4, 4], 0.2));
        let rec = rec_loss(&mut g, &p, &pp, x, x, &LossConfig::default()).unwrap();
        let logit = g.leaf(Tensor::full(&[1, 1], 0.0));
        let (t0, _) = enc_loss(&mut g, &rec, Some(logit), 0.0).unwrap();
        assert_eq!(t0, rec.total);
        let (t, _) = enc_loss(&mut g, &rec, Some(logit), 0.005).unwrap();
        assert!((g.value(t).item() - 0.005 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rec_loss_gradient() {
        let p = proxy();
        let cfg = Profile::FacesAnalog.loss();
        let mut rng = Rng::new(21);
        let x = Tensor::randn(&[1, 3, 8, 8], 0.5, &mut rng);
        let y = Tensor::randn(&[1, 3, 8, 8], 0.5, &mut rng);
        let r = check_gradients(&[y], 21, |g, v| {
            let pp = p.params.bind(g);
            let xn = g.leaf(x.clone());
            Ok(rec_loss(g, &p, &pp, xn, v[0], &cfg)?.total)
        })
        .unwrap();
        assert!(r.max_relative_error <= 1e-5, "{r:?}");
    }
}
