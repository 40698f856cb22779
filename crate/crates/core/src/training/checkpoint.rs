//! Training checkpoints stored as tensor archives.
//!
//! Besides model tensors an archive carries `meta.*` records (stage,
//! iteration, generator hash, PRNG state, config text) and `opt.{tag}.*`
//! records for each optimizer. Integers are split into 32-bit halves so they
//! survive the f64 payload exactly.

use std::path::Path;

use crate::cli::archive::{read_archive, write_archive};
use crate::error::{Error, Result};
use crate::synthgen::GeneratorHash;
use crate::tensor::{Adam, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Phase1,
    Phase2,
}

impl Stage {
    fn code(self) -> f64 {
        match self {
            Stage::Pretrain => 0.0,
            Stage::Phase1 => 1.0,
            Stage::Phase2 => 2.0,
        }
    }

    fn from_code(c: f64) -> Result<Self> {
        match c as i64 {
            0 => Ok(Stage::Pretrain),
            1 => Ok(Stage::Phase1),
            2 => Ok(Stage::Phase2),
            _ => Err(Error::Format(format!("unknown checkpoint stage {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Phase1 => "phase1",
            Stage::Phase2 => "phase2",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub iteration: u64,
    pub generator: GeneratorHash,
    /// Config text the run was started with.
    pub config: String,
    pub rng: [u64; 4],
    pub params: ParamStore,
    pub optimizers: Vec<(String, Adam)>,
}

fn pack(values: &[u64]) -> Tensor {
    let data: Vec<f64> = values
        .iter()
        .flat_map(|&v| [(v >> 32) as f64, (v & 0xffff_ffff) as f64])
        .collect();
    Tensor::new(vec![data.len()], data).expect("non-empty")
}

fn unpack(t: &Tensor, name: &str) -> Result<Vec<u64>> {
    let d = t.data();
    if d.len() % 2 != 0 || d.iter().any(|v| v.fract() != 0.0 || *v < 0.0 || *v > u32::MAX as f64) {
        return Err(Error::Format(format!("`{name}` is not a packed integer record")));
    }
    Ok(d.chunks(2).map(|c| ((c[0] as u64) << 32) | c[1] as u64).collect())
}

fn text_tensor(s: &str) -> Tensor {
    let mut data: Vec<f64> = s.bytes().map(f64::from).collect();
    // Records need at least one element; a leading length disambiguates.
    data.insert(0, s.len() as f64);
    Tensor::new(vec![data.len()], data).expect("non-empty")
}

fn tensor_text(t: &Tensor) -> Result<String> {
    let d = t.data();
    let n = d[0] as usize;
    if d.len() != n + 1 {
        return Err(Error::Format("config record length mismatch".into()));
    }
    let bytes: Vec<u8> = d[1..].iter().map(|&v| v as u8).collect();
    String::from_utf8(bytes).map_err(|_| Error::Format("config record is not UTF-8".into()))
}

impl Checkpoint {
    pub fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new();
        s.insert("meta.stage", Tensor::scalar(self.stage.code()))?;
        s.insert("meta.iteration", pack(&[self.iteration]))?;
        s.insert("meta.generator", pack(&[self.generator.0]))?;
        s.insert("meta.rng", pack(&self.rng))?;
        s.insert("meta.config", text_tensor(&self.config))?;
        for (tag, opt) in &self.optimizers {
            s.insert(
                format!("opt.{tag}.state"),
                Tensor::from_slice(
                    &[6],
                    &[
                        (opt.step_count() >> 32) as f64,
                        (opt.step_count() & 0xffff_ffff) as f64,
                        opt.lr,
                        opt.beta1,
                        opt.beta2,
                        opt.eps,
                    ],
                )?,
            )?;
            let (m, v) = opt.moments();
            for (i, t) in m.iter().enumerate() {
                s.insert(format!("opt.{tag}.m.{i}"), t.clone())?;
            }
            for (i, t) in v.iter().enumerate() {
                s.insert(format!("opt.{tag}.v.{i}"), t.clone())?;
            }
        }
        for (name, t) in self.params.iter() {
            if name.starts_with("meta.") || name.starts_with("opt.") {
                return Err(Error::InvalidArgument(format!("reserved parameter name `{name}`")));
            }
            s.insert(name, t.clone())?;
        }
        Ok(s)
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let stage = Stage::from_code(store.get("meta.stage")?.item())?;
        let iteration = unpack(store.get("meta.iteration")?, "meta.iteration")?[0];
        let generator = GeneratorHash(unpack(store.get("meta.generator")?, "meta.generator")?[0]);
        let rng_v = unpack(store.get("meta.rng")?, "meta.rng")?;
        if rng_v.len() != 4 {
            return Err(Error::Format("meta.rng must hold four words".into()));
        }
        let config = tensor_text(store.get("meta.config")?)?;
        let mut params = ParamStore::new();
        let mut tags: Vec<String> = Vec::new();
        for (name, t) in store.iter() {
            if let Some(rest) = name.strip_prefix("opt.") {
                if let Some(tag) = rest.strip_suffix(".state") {
                    tags.push(tag.to_string());
                }
            } else if !name.starts_with("meta.") {
                params.insert(name, t.clone())?;
            }
        }
        let mut optimizers = Vec::new();
        for tag in tags {
            let st = store.get(&format!("opt.{tag}.state"))?.data().to_vec();
            if st.len() != 6 {
                return Err(Error::Format(format!("opt.{tag}.state must hold six values")));
            }
            let step = unpack(&Tensor::from_slice(&[2], &st[..2])?, "optimizer step")?[0];
            let collect = |kind: &str| -> Vec<Tensor> {
                (0..)
                    .map_while(|i| store.get(&format!("opt.{tag}.{kind}.{i}")).ok().cloned())
                    .collect()
            };
            let (first, second) = (collect("m"), collect("v"));
            let mut shapes = ParamStore::new();
            for (i, t) in first.iter().enumerate() {
                shapes.insert(format!("{i}"), Tensor::zeros(t.shape()))?;
            }
            let mut opt = Adam::new(&shapes, st[2]);
            opt.beta1 = st[3];
            opt.beta2 = st[4];
            opt.eps = st[5];
            opt.restore(step, first, second)?;
            optimizers.push((tag, opt));
        }
        Ok(Checkpoint {
            stage,
            iteration,
            generator,
            config,
            rng: [rng_v[0], rng_v[1], rng_v[2], rng_v[3]],
            params,
            optimizers,
        })
    }

    pub fn optimizer(&self, tag: &str) -> Result<&Adam> {
        self.optimizers
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, o)| o)
            .ok_or_else(|| Error::MissingTensor(format!("opt.{tag}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(path, &self.to_store()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_store(&read_archive(path)?)
    }

    /// FNV-1a hash of the encoded archive bytes.
    pub fn content_hash(&self) -> Result<u64> {
        let bytes = crate::cli::archive::encode(&self.to_store()?, crate::cli::archive::DType::F64)?;
        let mut h = crate::cli::archive::Fnv1a::new();
        h.write(&bytes);
        Ok(h.finish())
    }
}
