use crate::cli::config::dump;
use crate::config::{Fusion, TrainConfig};
use crate::encoders::{fuse, AppearanceEncoder, ContentEncoder};
use crate::error::{Error, Result};
use crate::hypernet::HyperNetwork;
use crate::losses::{d_loss, enc_loss, rec_loss, ProxyFeatureNet};
use crate::rng::Rng;
use crate::synthgen::{Discriminator, Generator};
use crate::tensor::{Adam, Bound, Graph, NodeId, Tensor};
use crate::training::phase1::check_generator;
use crate::training::{draw_batch, finite, Checkpoint, Dataset, LogRow, Stage};

/// Appearance code `[B, L, 2·C_a, s, s]` for images `x` and their Phase-I
/// reconstructions `xw`. The fused mode encodes both in one batched pass.
pub(crate) fn appearance_code(
    g: &mut Graph,
    e2: &AppearanceEncoder,
    p: &Bound,
    fusion: Fusion,
    x: NodeId,
    xw: NodeId,
) -> Result<NodeId> {
    match fusion {
        Fusion::Fused => {
            let batch = g.shape(x)[0];
            let both = g.concat(&[x, xw], 0)?;
            let h = e2.forward(g, p, both)?;
            let hx = g.slice(h, 0, 0, batch)?;
            let hxw = g.slice(h, 0, batch, batch)?;
            fuse(g, hx, hxw)
        }
        Fusion::InputOnly => {
            let hx = e2.forward(g, p, x)?;
            fuse(g, hx, hx)
        }
    }
}

/// Trains E₂ and the hypernetworks with E₁ and the generator frozen; after
/// the warm-up a discriminator is trained alongside, one step per encoder
/// step on the same batch.
pub struct Phase2Trainer<'a> {
    pub cfg: TrainConfig,
    generator: &'a Generator,
    data: &'a Dataset,
    proxy: ProxyFeatureNet,
    pub content: ContentEncoder,
    pub appearance: AppearanceEncoder,
    pub hyper: HyperNetwork,
    pub discriminator: Discriminator,
    opt_e2: Adam,
    opt_hyper: Adam,
    opt_disc: Adam,
    rng: Rng,
    iteration: u64,
}

impl<'a> Phase2Trainer<'a> {
    /// `content` is the trained Phase-I encoder, `discriminator` the
    /// pretrained one.
    pub fn new(
        cfg: &TrainConfig,
        generator: &'a Generator,
        data: &'a Dataset,
        content: ContentEncoder,
        discriminator: Discriminator,
    ) -> Result<Self> {
        cfg.validate()?;
        if content.dims != cfg.dims {
            return Err(Error::Config(
                "content encoder dimensions differ from the config".into(),
            ));
        }
        let appearance = AppearanceEncoder::init(&cfg.dims, cfg.seed)?;
        let hyper = HyperNetwork::init(&cfg.dims, cfg.seed)?;
        Ok(Phase2Trainer {
            cfg: cfg.clone(),
            generator,
            data,
            proxy: ProxyFeatureNet::new(cfg.loss.proxy_seed)?,
            opt_e2: Adam::new(&appearance.params, cfg.lr),
            opt_hyper: Adam::new(&hyper.params, cfg.lr),
            opt_disc: Adam::new(&discriminator.params, cfg.lr),
            content,
            appearance,
            hyper,
            discriminator,
            rng: Rng::derive(cfg.seed, 0x9a52),
            iteration: 0,
        })
    }

    pub fn resume(cfg: &TrainConfig, generator: &'a Generator, data: &'a Dataset, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.stage != Stage::Phase2 {
            return Err(Error::Format(format!(
                "expected a phase2 checkpoint, got {}",
                ckpt.stage.name()
            )));
        }
        check_generator(generator, ckpt)?;
        let content = ContentEncoder::from_params(&cfg.dims, ckpt.params.extract_prefixed("e1.")?)?;
        let disc = Discriminator::from_params(cfg.dims.resolution, ckpt.params.extract("disc.")?)?;
        let mut t = Phase2Trainer::new(cfg, generator, data, content, disc)?;
        t.appearance = AppearanceEncoder::from_params(&cfg.dims, ckpt.params.extract_prefixed("e2.")?)?;
        t.hyper = HyperNetwork::from_params(&cfg.dims, ckpt.params.extract_prefixed("hyper.")?)?;
        t.opt_e2 = ckpt.optimizer("e2")?.clone();
        t.opt_hyper = ckpt.optimizer("hyper")?.clone();
        t.opt_disc = ckpt.optimizer("disc")?.clone();
        t.rng = Rng::from_state(ckpt.rng);
        t.iteration = ckpt.iteration;
        Ok(t)
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    #[cfg(test)]
    pub(crate) fn generator_ref(&self) -> &'a Generator {
        self.generator
    }

    #[cfg(test)]
    pub(crate) fn dataset_ref(&self) -> &'a Dataset {
        self.data
    }

    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.iteration;
        let adversarial = it >= self.cfg.warmup_iters;
        let batch = if adversarial {
            self.cfg.batch_size_adv
        } else {
            self.cfg.batch_size_warm
        };
        let x = draw_batch(&mut self.rng, &self.data.train, batch)?;
        let w = self.content.encode(&x)?;

        let mut g = Graph::new();
        let ap = self.appearance.params.bind(&mut g);
        let hp = self.hyper.params.bind(&mut g);
        let gp = self.generator.params.bind(&mut g);
        let pp = self.proxy.params.bind(&mut g);
        let xn = g.leaf(x);
        let wn = g.leaf(w);
        let xw = self.generator.synthesize(&mut g, &gp, wn, None)?;
        let h = appearance_code(&mut g, &self.appearance, &ap, self.cfg.fusion, xn, xw)?;
        let residuals = self.hyper.forward(&mut g, &hp, h)?;
        let xhat = self.generator.synthesize(&mut g, &gp, wn, Some(&residuals))?;
        let rec = rec_loss(&mut g, &self.proxy, &pp, xn, xhat, &self.cfg.loss)?;

        let mut row = LogRow {
            iteration: it,
            l2: g.value(rec.l2).item(),
            perc: g.value(rec.perc).item(),
            id: g.value(rec.id).item(),
            adv: None,
            d_loss: None,
            r1: None,
        };
        let mut trainable: Vec<NodeId> = ap.ids().to_vec();
        trainable.extend_from_slice(hp.ids());
        let n_e2 = ap.ids().len();

        let mut disc_grads = None;
        let total = if adversarial {
            let dp = self.discriminator.params.bind(&mut g);
            let logits = self.discriminator.forward(&mut g, &dp, xhat)?;
            let (total, adv) = enc_loss(&mut g, &rec, Some(logits), self.cfg.loss.lambda_adv)?;
            row.adv = adv.map(|a| g.value(a).item());

            let fake = g.detach(xhat);
            let disc = &self.discriminator;
            let dl = d_loss(&mut g, xn, fake, self.cfg.loss.r1_gamma, |g, img| {
                disc.forward(g, &dp, img)
            })?;
            row.d_loss = Some(finite(it, "discriminator loss", g.value(dl.total).item())?);
            row.r1 = Some(g.value(dl.r1).item());
            let grads = g.backward(dl.total, dp.ids())?;
            disc_grads = Some(grads.iter().map(|&id| g.value(id).clone()).collect::<Vec<Tensor>>());
            total
        } else {
            rec.total
        };
        finite(it, "encoder loss", g.value(total).item())?;
        let grads = g.backward(total, &trainable)?;
        let grads: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();
        drop(g);

        self.opt_e2.step(&mut self.appearance.params, &grads[..n_e2])?;
        self.opt_hyper.step(&mut self.hyper.params, &grads[n_e2..])?;
        if let Some(dg) = disc_grads {
            self.opt_disc.step(&mut self.discriminator.params, &dg)?;
        }
        self.iteration += 1;
        Ok(row)
    }

    pub fn run_until(&mut self, until: u64, mut on_row: impl FnMut(&LogRow) -> Result<()>) -> Result<()> {
        while self.iteration < until {
            let row = self.step()?;
            on_row(&row)?;
        }
        Ok(())
    }

    /// Snapshot holding E₁ (frozen copy), E₂, H, D and all optimizer state.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut params = self.content.params.clone();
        params.absorb("", &self.appearance.params)?;
        params.absorb("", &self.hyper.params)?;
        params.absorb("disc.", &self.discriminator.params)?;
        Ok(Checkpoint {
            stage: Stage::Phase2,
            iteration: self.iteration,
            generator: self.generator.hash(),
            config: dump(&self.cfg),
            rng: self.rng.state(),
            params,
            optimizers: vec![
                ("e2".into(), self.opt_e2.clone()),
                ("hyper".into(), self.opt_hyper.clone()),
                ("disc".into(), self.opt_disc.clone()),
            ],
        })
    }
}
