//! Command-line front end and the on-disk formats it reads and writes.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

pub mod archive;
pub mod config;
pub mod image;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gradsuite::{run_suite, TOLERANCE};
use crate::inversion::{
    aggregate_stats, bench, bench_csv, find_directions, load_directions, mean_difference_map, residual_stats,
    save_directions, stats_csv, BenchSettings, InterpMode, Models, Strategy,
};
use crate::losses::ProxyFeatureNet;
use crate::synthgen::{logit_gap, pretrain_gan, Generator};
use crate::tensor::{ParamStore, Tensor};
use crate::training::{
    drive, load_content_encoder, load_pretrained, pretrain_checkpoint, Checkpoint, Dataset, LogRow, Phase1Trainer,
    Phase2Trainer, RunOutputs,
};

#[derive(Parser, Debug)]
#[command(
    name = "ganinv",
    version,
    about = "Two-phase GAN inversion on a toy style-based generator"
)]
struct Cli {
    /// `key = value` config file applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single `key=value` override, applied after --config. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed; overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Pretrain checkpoint holding the frozen generator.
    #[arg(long)]
    gan: PathBuf,
    /// Phase-II checkpoint.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Checkpoint written periodically and at the end.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop at this iteration instead of train.total_iters.
    #[arg(long)]
    until: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Adversarially pretrain the toy generator and discriminator.
    Pretrain {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the content encoder against the frozen generator.
    TrainPhase1 {
        #[arg(long)]
        gan: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the appearance encoder, hypernetworks and discriminator.
    TrainPhase2 {
        #[arg(long)]
        gan: PathBuf,
        /// Phase-I checkpoint.
        #[arg(long)]
        phase1: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Invert one image; writes xhat.ppm, xw.ppm and result.hta.
    Invert {
        #[command(flatten)]
        models: ModelArgs,
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Invert an image and move its latent code along a direction.
    Edit {
        #[command(flatten)]
        models: ModelArgs,
        image: PathBuf,
        /// Direction archive from `directions`.
        #[arg(long)]
        directions: PathBuf,
        /// Direction label; the first one when omitted.
        #[arg(long)]
        label: Option<String>,
        /// Edit strength; edit.gamma when omitted.
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert two images and blend them.
    Interpolate {
        #[command(flatten)]
        models: ModelArgs,
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        t: f64,
        /// `dual` or `latent-only`.
        #[arg(long, default_value = "dual")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare inversion strategies; images default to the held-out set.
    Bench {
        #[command(flatten)]
        models: ModelArgs,
        images: Vec<PathBuf>,
        /// Comma-separated subset of phase1-only,full,latent-optimization,per-image-finetune.
        #[arg(long)]
        strategies: Option<String>,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean absolute residual per generator layer.
    Stats {
        #[command(flatten)]
        models: ModelArgs,
        images: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean |x̂ − x̂_w| heat map as a PGM image.
    Diffmap {
        #[command(flatten)]
        models: ModelArgs,
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also store the raw map as a tensor archive.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Principal directions of the generator's latent space.
    Directions {
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Finite-difference check of every op and composite.
    Gradcheck,
    /// Print the effective configuration.
    DumpConfig,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the command, printing to
/// stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

/// Defaults, then `base` (a checkpoint's config echo), then --config,
/// --set and --seed.
fn settings(cli: &Cli, base: Option<&str>) -> std::result::Result<TrainConfig, Failure> {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let mut cfg = TrainConfig::default();
    if let Some(text) = base {
        cfg = config::apply(&cfg, text).map_err(usage)?;
    }
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|e| usage(Error::io(p, e)))?;
        cfg = config::apply(&cfg, &text).map_err(usage)?;
    }
    cfg = config::apply_overrides(&cfg, &cli.set).map_err(usage)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_text(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => archive::write_atomic(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(io(Path::new("<stdout>"))),
    }
}

fn progress(out: &mut dyn Write, every: u64) -> impl FnMut(&LogRow) + '_ {
    move |row| {
        if every > 0 && (row.iteration + 1) % every == 0 {
            let _ = writeln!(
                out,
                "iter {} l2 {:.6} perc {:.6} id {:.6}",
                row.iteration + 1,
                row.l2,
                row.perc,
                row.id
            );
        }
    }
}

struct Loaded {
    cfg: TrainConfig,
    models: Models,
}

fn load_models(cli: &Cli, args: &ModelArgs) -> std::result::Result<Loaded, Failure> {
    let ckpt = Checkpoint::load(&args.model)?;
    let cfg = settings(cli, Some(&ckpt.config))?;
    let (generator, _) = load_pretrained(&cfg, &Checkpoint::load(&args.gan)?)?;
    let models = Models::from_checkpoint(&cfg, generator, &ckpt)?;
    Ok(Loaded { cfg, models })
}

/// The given PPM files, or the held-out set when none are given.
fn image_set(cfg: &TrainConfig, generator: &Generator, paths: &[PathBuf]) -> Result<Vec<Tensor>> {
    if paths.is_empty() {
        let data = Dataset::build(cfg, generator)?;
        Ok((0..data.heldout.shape()[0]).map(|i| data.heldout.index(i)).collect())
    } else {
        paths.iter().map(|p| image::read_ppm(p)).collect()
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::DumpConfig => {
            let cfg = settings(cli, None)?;
            write_text(None, &config::dump(&cfg), out)?;
        }
        Command::Gradcheck => {
            let cases = run_suite(|c| {
                let _ = writeln!(
                    out,
                    "{} seed {} max_rel_err {:.3e} checked {} skipped {} {}",
                    c.name,
                    c.seed,
                    c.report.max_relative_error,
                    c.report.elements_checked,
                    c.report.kinks_skipped,
                    if c.passed() { "ok" } else { "FAIL" }
                );
            })?;
            let failed = cases.iter().filter(|c| !c.passed()).count();
            writeln!(out, "{} cases, {failed} above {TOLERANCE:e}", cases.len()).map_err(io(Path::new("<stdout>")))?;
            if failed > 0 {
                return Err(Failure::Runtime(Error::InvalidArgument(format!(
                    "{failed} gradient checks failed"
                ))));
            }
        }
        Command::Pretrain { out: path, log } => {
            let cfg = settings(cli, None)?;
            let mut csv = match log {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p).map_err(io(p))?);
                    writeln!(w, "iteration,d_loss,r1,g_loss").map_err(io(p))?;
                    Some((p, w))
                }
                None => None,
            };
            let mut write_err = None;
            let gan = pretrain_gan(&cfg, |s| {
                if let Some((p, w)) = csv.as_mut() {
                    if let Err(e) = writeln!(w, "{},{},{},{}", s.iteration, s.d_loss, s.r1, s.g_loss) {
                        write_err.get_or_insert(Error::io(*p, e));
                    }
                }
                if cfg.log_every > 0 && (s.iteration + 1) % cfg.log_every == 0 {
                    let _ = writeln!(
                        out,
                        "iter {} d {:.4} r1 {:.4} g {:.4}",
                        s.iteration + 1,
                        s.d_loss,
                        s.r1,
                        s.g_loss
                    );
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            if let Some((p, mut w)) = csv {
                w.flush().map_err(io(p))?;
            }
            pretrain_checkpoint(&cfg, &gan)?.save(path)?;
            let gap = logit_gap(&gan, cfg.seed, 64)?;
            writeln!(out, "generator {} logit gap {gap:.4}", gan.generator.hash()).map_err(io(path))?;
        }
        Command::TrainPhase1 { gan, run } => {
            let resume = run.resume.as_deref().map(Checkpoint::load).transpose()?;
            let gan_ckpt = Checkpoint::load(gan)?;
            let base = resume.as_ref().map_or(&gan_ckpt.config, |c| &c.config);
            let cfg = settings(cli, Some(base))?;
            let (generator, _) = load_pretrained(&cfg, &gan_ckpt)?;
            let data = Dataset::build(&cfg, &generator)?;
            let mut trainer = match &resume {
                Some(c) => Phase1Trainer::resume(&cfg, &generator, &data, c)?,
                None => Phase1Trainer::new(&cfg, &generator, &data)?,
            };
            let until = run.until.unwrap_or(cfg.total_iters);
            let outputs = RunOutputs {
                log: run.log.as_deref(),
                checkpoint: Some(&run.out),
            };
            let ckpt = drive(
                &mut trainer,
                until,
                cfg.checkpoint_every,
                outputs,
                progress(out, cfg.log_every),
            )?;
            writeln!(out, "phase1 stopped at iteration {}", ckpt.iteration).map_err(io(&run.out))?;
        }
        Command::TrainPhase2 { gan, phase1, run } => {
            let resume = run.resume.as_deref().map(Checkpoint::load).transpose()?;
            let p1 = Checkpoint::load(phase1)?;
            let base = resume.as_ref().map_or(&p1.config, |c| &c.config);
            let cfg = settings(cli, Some(base))?;
            let (generator, disc) = load_pretrained(&cfg, &Checkpoint::load(gan)?)?;
            let data = Dataset::build(&cfg, &generator)?;
            let mut trainer = match &resume {
                Some(c) => Phase2Trainer::resume(&cfg, &generator, &data, c)?,
                None => {
                    let content = load_content_encoder(&cfg, &generator, &p1)?;
                    Phase2Trainer::new(&cfg, &generator, &data, content, disc)?
                }
            };
            let until = run.until.unwrap_or(cfg.total_iters);
            let outputs = RunOutputs {
                log: run.log.as_deref(),
                checkpoint: Some(&run.out),
            };
            let ckpt = drive(
                &mut trainer,
                until,
                cfg.checkpoint_every,
                outputs,
                progress(out, cfg.log_every),
            )?;
            let models = Models::from_checkpoint(&cfg, generator.clone(), &ckpt)?;
            let (l2_w, l2_full) = models.heldout_l2(&data.heldout)?;
            writeln!(
                out,
                "phase2 stopped at iteration {}; held-out l2 phase1 {l2_w:.6} full {l2_full:.6}",
                ckpt.iteration
            )
            .map_err(io(&run.out))?;
        }
        Command::Invert {
            models,
            image: path,
            out_dir,
        } => {
            let m = load_models(cli, models)?.models;
            let x = image::read_ppm(path)?;
            let r = m.invert(&x)?;
            std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
            image::write_ppm(&out_dir.join("xhat.ppm"), &r.xhat)?;
            image::write_ppm(&out_dir.join("xw.ppm"), &r.xw)?;
            r.save(&out_dir.join("result.hta"))?;
            let t = &r.timing;
            writeln!(
                out,
                "l2 phase1 {:.6} full {:.6}; seconds content {:.4} render_w {:.4} appearance {:.4} hyper {:.4} render {:.4}",
                crate::inversion::l2_unit(&x, &r.xw)?,
                crate::inversion::l2_unit(&x, &r.xhat)?,
                t.content,
                t.render_w,
                t.appearance,
                t.hyper,
                t.render
            )
            .map_err(io(out_dir))?;
        }
        Command::Edit {
            models,
            image: path,
            directions,
            label,
            gamma,
            out: target,
        } => {
            let Loaded { cfg, models: m } = load_models(cli, models)?;
            let dirs = load_directions(directions)?;
            let d = match label {
                Some(l) => dirs.iter().find(|d| &d.label == l),
                None => dirs.first(),
            }
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "no direction `{}` in {}",
                    label.as_deref().unwrap_or("*"),
                    directions.display()
                ))
            })?;
            let r = m.invert(&image::read_ppm(path)?)?;
            let edited = m.edit(&r, d, gamma.unwrap_or(cfg.edit_gamma))?;
            image::write_ppm(target, &edited)?;
        }
        Command::Interpolate {
            models,
            a,
            b,
            t,
            mode,
            out: target,
        } => {
            let m = load_models(cli, models)?.models;
            let mode = InterpMode::parse(mode).map_err(|e| Failure::Usage(e.to_string()))?;
            let ra = m.invert(&image::read_ppm(a)?)?;
            let rb = m.invert(&image::read_ppm(b)?)?;
            image::write_ppm(target, &m.interpolate(&ra, &rb, *t, mode)?)?;
        }
        Command::Bench {
            models,
            images,
            strategies,
            out: target,
        } => {
            let Loaded { cfg, models: m } = load_models(cli, models)?;
            let strategies = match strategies {
                Some(list) => list
                    .split(',')
                    .map(|s| Strategy::parse(s.trim()))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Failure::Usage(e.to_string()))?,
                None => Strategy::ALL.to_vec(),
            };
            let set = image_set(&cfg, &m.generator, images)?;
            let proxy = ProxyFeatureNet::new(cfg.loss.proxy_seed)?;
            let rows = bench(
                &m,
                &set,
                &strategies,
                &proxy,
                &BenchSettings::from_config(&cfg),
                |_, _| {},
            )?;
            write_text(target.as_deref(), &bench_csv(&rows), out)?;
        }
        Command::Stats {
            models,
            images,
            out: target,
        } => {
            let Loaded { cfg, models: m } = load_models(cli, models)?;
            let per_image = image_set(&cfg, &m.generator, images)?
                .iter()
                .map(|x| residual_stats(&m.invert(x)?.residuals, &m.generator.layers))
                .collect::<Result<Vec<_>>>()?;
            write_text(target.as_deref(), &stats_csv(&aggregate_stats(&per_image)?), out)?;
        }
        Command::Diffmap {
            models,
            images,
            out: target,
            archive: raw,
        } => {
            let Loaded { cfg, models: m } = load_models(cli, models)?;
            let pairs = image_set(&cfg, &m.generator, images)?
                .iter()
                .map(|x| m.invert(x).map(|r| (r.xhat, r.xw)))
                .collect::<Result<Vec<_>>>()?;
            let map = mean_difference_map(&pairs)?;
            image::write_heat_pgm(target, &map)?;
            if let Some(p) = raw {
                let mut s = ParamStore::new();
                s.insert("map", map)?;
                archive::write_archive(p, &s)?;
            }
        }
        Command::Directions { gan, out: target, k } => {
            let gan_ckpt = Checkpoint::load(gan)?;
            let cfg = settings(cli, Some(&gan_ckpt.config))?;
            let (generator, _) = load_pretrained(&cfg, &gan_ckpt)?;
            let k = k.unwrap_or(cfg.directions_k);
            let (dirs, values) = find_directions(&generator, k, cfg.directions_samples, cfg.seed)?;
            save_directions(target, &dirs)?;
            for (d, v) in dirs.iter().zip(values) {
                writeln!(out, "{} eigenvalue {v:.6}", d.label).map_err(io(target))?;
            }
        }
    }
    Ok(())
}
