use crate::cli::config::dump;
use crate::config::TrainConfig;
use crate::encoders::ContentEncoder;
use crate::error::{Error, Result};
use crate::losses::{rec_loss, ProxyFeatureNet};
use crate::rng::Rng;
use crate::synthgen::Generator;
use crate::tensor::{Adam, Graph, Tensor};
use crate::training::{draw_batch, finite, Checkpoint, Dataset, LogRow, Stage};

/// Samples used to estimate the mean content code for the head bias.
const MEAN_W_SAMPLES: usize = 4096;

/// Trains E₁ alone against the frozen generator with the reconstruction loss.
pub struct Phase1Trainer<'a> {
    pub cfg: TrainConfig,
    generator: &'a Generator,
    data: &'a Dataset,
    proxy: ProxyFeatureNet,
    pub encoder: ContentEncoder,
    opt: Adam,
    rng: Rng,
    iteration: u64,
}

impl<'a> Phase1Trainer<'a> {
    /// Fresh run. The head bias starts at the mean content code so early
    /// reconstructions sit at the centre of the latent distribution.
    pub fn new(cfg: &TrainConfig, generator: &'a Generator, data: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        let mut encoder = ContentEncoder::init(&cfg.dims, cfg.seed)?;
        encoder
            .params
            .set("e1.head.b", generator.mean_w(MEAN_W_SAMPLES, cfg.seed)?)?;
        let opt = Adam::new(&encoder.params, cfg.lr);
        Ok(Phase1Trainer {
            cfg: cfg.clone(),
            generator,
            data,
            proxy: ProxyFeatureNet::new(cfg.loss.proxy_seed)?,
            encoder,
            opt,
            rng: Rng::derive(cfg.seed, 0x9a51),
            iteration: 0,
        })
    }

    pub fn resume(cfg: &TrainConfig, generator: &'a Generator, data: &'a Dataset, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.stage != Stage::Phase1 {
            return Err(Error::Format(format!(
                "expected a phase1 checkpoint, got {}",
                ckpt.stage.name()
            )));
        }
        check_generator(generator, ckpt)?;
        let mut t = Phase1Trainer::new(cfg, generator, data)?;
        t.encoder = ContentEncoder::from_params(&cfg.dims, ckpt.params.extract("")?)?;
        t.opt = ckpt.optimizer("e1")?.clone();
        t.rng = Rng::from_state(ckpt.rng);
        t.iteration = ckpt.iteration;
        Ok(t)
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.iteration;
        let x = draw_batch(&mut self.rng, &self.data.train, self.cfg.batch_size_warm)?;
        let mut g = Graph::new();
        let ep = self.encoder.params.bind(&mut g);
        let gp = self.generator.params.bind(&mut g);
        let pp = self.proxy.params.bind(&mut g);
        let xn = g.leaf(x);
        let w = self.encoder.forward(&mut g, &ep, xn)?;
        let xhat = self.generator.synthesize(&mut g, &gp, w, None)?;
        let rec = rec_loss(&mut g, &self.proxy, &pp, xn, xhat, &self.cfg.loss)?;
        finite(it, "reconstruction loss", g.value(rec.total).item())?;
        let grads = g.backward(rec.total, ep.ids())?;
        let grads: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();
        let row = LogRow {
            iteration: it,
            l2: g.value(rec.l2).item(),
            perc: g.value(rec.perc).item(),
            id: g.value(rec.id).item(),
            adv: None,
            d_loss: None,
            r1: None,
        };
        drop(g);
        self.opt.step(&mut self.encoder.params, &grads)?;
        self.iteration += 1;
        Ok(row)
    }

    /// Steps until `iteration() == until`, passing each row to `on_row`.
    pub fn run_until(&mut self, until: u64, mut on_row: impl FnMut(&LogRow) -> Result<()>) -> Result<()> {
        while self.iteration < until {
            let row = self.step()?;
            on_row(&row)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            stage: Stage::Phase1,
            iteration: self.iteration,
            generator: self.generator.hash(),
            config: dump(&self.cfg),
            rng: self.rng.state(),
            params: self.encoder.params.clone(),
            optimizers: vec![("e1".into(), self.opt.clone())],
        }
    }
}

pub(crate) fn check_generator(generator: &Generator, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.generator != generator.hash() {
        return Err(Error::HashMismatch {
            expected: generator.hash().to_string(),
            found: ckpt.generator.to_string(),
        });
    }
    Ok(())
}
