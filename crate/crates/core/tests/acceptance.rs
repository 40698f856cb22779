// Acceptance criteria, one pass/fail line each.
//
// Criteria 3, 4, 5 and 9 are defined on a training protocol that takes over
// an hour on one core: 3000 pretraining iterations, then 20k Phase-I and 20k
// Phase-II iterations (2k warm-up) on 256 self-inversion images, with three
// Phase-II runs in total. By default their verdicts are read from the archived
// CLI run in tests/data/, and a reduced budget re-checks the same directions
// here. GANINV_FULL=1 runs the full protocol in-process instead.

use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;

use ganinv::cli::archive::{read_archive, write_archive};
use ganinv::cli::image::{decode_ppm, encode_ppm, from_byte};
use ganinv::config::{Fusion, TrainConfig};
use ganinv::encoders::{AppearanceEncoder, ContentEncoder};
use ganinv::gradsuite::{run_suite, TOLERANCE};
use ganinv::hypernet::{refine_generator, HyperNetwork, ResidualWeights};
use ganinv::inversion::{
    bench, bench_csv, difference_map, edit_latent, find_directions, lerp_latent, lerp_residuals, metrics,
    residual_stats, BenchSettings, InterpMode, MetricSettings, Models, Strategy,
};
use ganinv::losses::ProxyFeatureNet;
use ganinv::rng::Rng;
use ganinv::synthgen::{pretrain_gan, Generator, LayerRole};
use ganinv::tensor::{ParamStore, Tensor};
use ganinv::training::{drive, Checkpoint, Dataset, Phase1Trainer, Phase2Trainer, RunOutputs};

struct Protocol {
    name: &'static str,
    pretrain_iters: u64,
    phase1_iters: u64,
    phase2_iters: u64,
    warmup: u64,
    bench_images: usize,
}

const FULL: Protocol = Protocol {
    name: "full",
    pretrain_iters: 3_000,
    phase1_iters: 20_000,
    phase2_iters: 20_000,
    warmup: 2_000,
    bench_images: 64,
};

const REDUCED: Protocol = Protocol {
    name: "reduced",
    pretrain_iters: 300,
    phase1_iters: 1_500,
    phase2_iters: 1_500,
    warmup: 150,
    bench_images: 8,
};

/// Iterations compared for determinism and resume.
const DETERMINISM_ITERS: u64 = 500;
const RESUME_TO: u64 = 600;

struct Line {
    n: u32,
    status: &'static str,
    detail: String,
    /// Measured in this process, so a FAIL fails the test.
    live: bool,
    note: bool,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn push(&mut self, n: u32, status: &'static str, detail: String, live: bool, note: bool) {
        self.lines.push(Line {
            n,
            status,
            detail,
            live,
            note,
        });
    }

    fn record(&mut self, n: u32, pass: bool, detail: String) {
        self.push(n, if pass { "PASS" } else { "FAIL" }, detail, true, false);
    }

    /// Soft criteria warn instead of failing.
    fn soft(&mut self, n: u32, pass: bool, detail: String) {
        self.push(n, if pass { "PASS" } else { "WARN" }, detail, true, false);
    }

    /// A verdict read from the archived full-protocol run.
    fn archived(&mut self, n: u32, status: &'static str, detail: String) {
        self.push(n, status, detail, false, false);
    }

    /// A supporting check printed under its criterion.
    fn note(&mut self, n: u32, status: &'static str, detail: String, live: bool) {
        self.push(n, status, detail, live, true);
    }

    // Written to the stderr handle directly, which the test harness does not
    // capture, so the lines show up in a plain `cargo test` run.
    fn print(&self) {
        let mut order: Vec<&Line> = self.lines.iter().collect();
        order.sort_by_key(|l| (l.n, l.note));
        let mut out = String::new();
        for l in order {
            if l.note {
                writeln!(out, "              {} {}", l.status, l.detail).unwrap();
            } else {
                writeln!(out, "criterion {:>2}: {} {}", l.n, l.status, l.detail).unwrap();
            }
        }
        std::io::stderr().write_all(out.as_bytes()).unwrap();
    }

    fn live_failures(&self) -> Vec<String> {
        self.lines
            .iter()
            .filter(|l| l.live && l.status == "FAIL")
            .map(|l| format!("{}: {}", l.n, l.detail))
            .collect()
    }
}

/// Held-out and bench numbers of one training protocol.
struct Outcome {
    l2_phase1: f64,
    l2_full: f64,
    l2_x_only: f64,
    l2_d16: f64,
    bench_images: usize,
    bench_l2_phase1: f64,
    bench_l2_full: f64,
    speedup: f64,
    minutes: f64,
}

impl Outcome {
    /// The full protocol as run through the CLI; see tests/data/full_protocol.txt.
    fn archived() -> Outcome {
        let text = include_str!("data/full_protocol.txt");
        let get = |key: &str| -> f64 {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .and_then(|(_, v)| v.trim().parse().ok())
                .unwrap_or_else(|| panic!("full_protocol.txt lacks `{key}`"))
        };
        Outcome {
            l2_phase1: get("heldout_l2_phase1"),
            l2_full: get("heldout_l2_full"),
            l2_x_only: get("heldout_l2_full_x_only"),
            l2_d16: get("heldout_l2_full_d16"),
            bench_images: get("bench_images") as usize,
            bench_l2_phase1: get("bench_l2_phase1"),
            bench_l2_full: get("bench_l2_full"),
            speedup: get("bench_seconds_latent_optimization") / get("bench_seconds_full"),
            minutes: get("runtime_minutes"),
        }
    }

    fn ratio(&self) -> f64 {
        self.l2_full / self.l2_phase1
    }

    fn pass_3(&self) -> bool {
        self.ratio() <= 0.7
    }

    fn pass_4(&self) -> bool {
        self.l2_x_only >= self.l2_full
    }

    fn pass_5(&self) -> bool {
        self.l2_d16 >= self.l2_full
    }

    fn pass_9(&self) -> bool {
        self.speedup >= 50.0 && self.bench_l2_full < self.bench_l2_phase1
    }

    fn detail_3(&self) -> String {
        format!(
            "held-out l2 phase1 {:.5}, full {:.5}, ratio {:.3} (bar 0.7); runtime {:.0} min (target 45)",
            self.l2_phase1,
            self.l2_full,
            self.ratio(),
            self.minutes
        )
    }

    fn detail_4(&self) -> String {
        format!("held-out l2 x-only {:.5} >= fused {:.5}", self.l2_x_only, self.l2_full)
    }

    fn detail_5(&self) -> String {
        format!("held-out l2 D=16 {:.5} >= D=64 {:.5}", self.l2_d16, self.l2_full)
    }

    fn detail_9(&self) -> String {
        format!(
            "{} images; latent optimization {:.0}x slower than full (>= 50x); l2 full {:.5} < phase1-only {:.5}",
            self.bench_images, self.speedup, self.bench_l2_full, self.bench_l2_phase1
        )
    }
}

fn soft_status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "WARN"
    }
}

fn hard_status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let cases = run_suite(|_| {}).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let worst = cases.iter().map(|c| c.report.max_relative_error).fold(0.0, f64::max);
    let failed: Vec<_> = cases
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{}@{}", c.name, c.seed))
        .collect();
    let mut per_name = std::collections::BTreeMap::<&str, usize>::new();
    for c in &cases {
        *per_name.entry(c.name.as_str()).or_default() += 1;
    }
    let min_cases = per_name.values().copied().min().unwrap_or(0);
    r.record(
        1,
        failed.is_empty() && min_cases >= 5 && secs < 120.0 && TOLERANCE <= 1e-5,
        format!(
            "{} cases over {} ops/composites, >= {min_cases} each, worst rel err {worst:.2e} <= 1e-5, {secs:.1}s < 120s, failed {failed:?}",
            cases.len(),
            per_name.len()
        ),
    );
}

fn criterion_2(r: &mut Report) {
    let cfg = TrainConfig::default();
    let dims = &cfg.dims;
    let gen = Generator::init(dims, 0).unwrap();
    let mut content = ContentEncoder::init(dims, 0).unwrap();
    // A random head so the inputs map to different codes.
    let mut rng = Rng::new(2);
    let head = content.params.get("e1.head.w").unwrap().shape().to_vec();
    content
        .params
        .set("e1.head.w", Tensor::randn(&head, 0.1, &mut rng))
        .unwrap();
    let models = Models::new(
        gen.clone(),
        content,
        AppearanceEncoder::init(dims, 0).unwrap(),
        HyperNetwork::init(dims, 0).unwrap(),
        Fusion::Fused,
    )
    .unwrap();
    let r_ = dims.resolution;
    let mut equal = 0;
    for _ in 0..32 {
        let x = Tensor::randn(&[3, r_, r_], 0.5, &mut rng);
        let inv = models.invert(&x).unwrap();
        equal += usize::from(inv.xhat.bit_eq(&inv.xw));
    }
    let w = gen.sample_w(4, &mut rng).unwrap();
    let refined = refine_generator(&gen, &ResidualWeights::zeros(&gen)).unwrap();
    let same = refined.render(&w).unwrap().bit_eq(&gen.render(&w).unwrap());
    r.record(
        2,
        equal == 32 && same,
        format!("x_hat bit-equals x_w on {equal}/32 inputs; zero-residual refine bit-identical: {same}"),
    );
}

fn criterion_8(r: &mut Report) {
    let cfg = TrainConfig::default();
    let settings = MetricSettings::from_config(&cfg);
    let proxy = ProxyFeatureNet::new(cfg.loss.proxy_seed).unwrap();
    let mut rng = Rng::new(8);
    let res = cfg.dims.resolution;
    let mut ok = 0;
    for _ in 0..50 {
        let x = Tensor::randn(&[3, res, res], 0.5, &mut rng).map(|v| v.clamp(-1.0, 1.0));
        let m = metrics(&x, &x, &proxy, &settings).unwrap();
        if m.l2 == 0.0 && m.psnr == f64::INFINITY && m.ms_ssim == 1.0 && m.lpips_proxy == 0.0 && m.id_proxy == 1.0 {
            ok += 1;
        }
    }
    // Black against mid-grey: unit-range difference 0.5 everywhere, l2 0.25,
    // psnr 10·log10(1/0.25).
    let black = Tensor::full(&[3, res, res], -1.0);
    let grey = Tensor::zeros(&[3, res, res]);
    let m = metrics(&black, &grey, &proxy, &settings).unwrap();
    let want = 10.0 * 4f64.log10();
    r.record(
        8,
        ok == 50 && m.l2 == 0.25 && (m.psnr - want).abs() <= 1e-3 && (m.psnr - 6.0206).abs() <= 1e-3,
        format!(
            "identity tuple on {ok}/50 images; l2 {} -> psnr {:.5} dB (6.0206 +- 1e-3)",
            m.l2, m.psnr
        ),
    );
}

/// Channel mean of |a - b|, written out by hand.
fn channel_mean_abs(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let s = a.shape();
    let hw = s[1] * s[2];
    (0..hw)
        .map(|i| {
            (0..s[0])
                .map(|c| (a.data()[c * hw + i] - b.data()[c * hw + i]).abs())
                .sum::<f64>()
                / s[0] as f64
        })
        .collect()
}

fn tensors_bit_eq(a: &ParamStore, b: &ParamStore) -> bool {
    a.names() == b.names() && a.names().iter().all(|n| a.get(n).unwrap().bit_eq(b.get(n).unwrap()))
}

fn persistence_round_trips() -> (bool, bool) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(10);
    let mut store = ParamStore::new();
    store.insert("a", Tensor::randn(&[5, 7], 1e3, &mut rng)).unwrap();
    let special = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        5e-324,
        f64::MAX,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NAN,
    ];
    store
        .insert("special", Tensor::from_slice(&[8], &special).unwrap())
        .unwrap();
    store.insert("scalar", Tensor::scalar(std::f64::consts::PI)).unwrap();
    let path = dir.path().join("a.hta");
    write_archive(&path, &store).unwrap();
    let archive = tensors_bit_eq(&read_archive(&path).unwrap(), &store);

    // Every byte value through decode and encode, and back.
    let mut ppm = b"P6\n16 16\n255\n".to_vec();
    ppm.extend((0..768).map(|i| (i * 7 % 256) as u8));
    let img = decode_ppm(&ppm).unwrap();
    let again = encode_ppm(&img).unwrap();
    let bytes_ok = again == ppm && decode_ppm(&again).unwrap().bit_eq(&img);
    let values_ok = (0..=255u8).all(|b| {
        let t = Tensor::full(&[3, 1, 1], from_byte(b));
        decode_ppm(&encode_ppm(&t).unwrap()).unwrap().bit_eq(&t)
    });
    (archive, bytes_ok && values_ok)
}

struct Trained {
    cfg: TrainConfig,
    gan: ganinv::synthgen::PretrainedGan,
    data: Dataset,
    phase1: Checkpoint,
    p1_at_500: Vec<u8>,
    p1_at_600: Vec<u8>,
    models: Models,
}

fn protocol_config(p: &Protocol) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.pretrain_iters = p.pretrain_iters;
    cfg.total_iters = p.phase1_iters;
    cfg.warmup_iters = p.warmup;
    cfg.data.train_size = 256;
    cfg.data.heldout_size = 64;
    cfg
}

fn checkpoint_bytes(c: &Checkpoint) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.hta");
    c.save(&path).unwrap();
    std::fs::read(path).unwrap()
}

fn phase2(cfg: &TrainConfig, t: &Trained, iters: u64) -> Models {
    let gen = Generator::from_params(&cfg.dims, t.gan.generator.params.clone()).unwrap();
    let content = ContentEncoder::from_params(&cfg.dims, t.phase1.params.clone()).unwrap();
    let mut cfg = cfg.clone();
    cfg.total_iters = iters;
    let mut p2 = Phase2Trainer::new(&cfg, &gen, &t.data, content, t.gan.discriminator.clone()).unwrap();
    let ckpt = drive(&mut p2, iters, 0, RunOutputs::default(), |_| {}).unwrap();
    Models::from_checkpoint(&cfg, gen.clone(), &ckpt).unwrap()
}

fn train(p: &Protocol) -> Trained {
    let cfg = protocol_config(p);
    let t0 = Instant::now();
    let gan = pretrain_gan(&cfg, |_| {}).unwrap();
    let data = Dataset::build(&cfg, &gan.generator).unwrap();
    let mut p1 = Phase1Trainer::new(&cfg, &gan.generator, &data).unwrap();
    let at_500 = drive(&mut p1, DETERMINISM_ITERS, 0, RunOutputs::default(), |_| {}).unwrap();
    let at_600 = drive(&mut p1, RESUME_TO, 0, RunOutputs::default(), |_| {}).unwrap();
    let phase1 = drive(&mut p1, p.phase1_iters, 0, RunOutputs::default(), |_| {}).unwrap();
    println!("  pretrain + phase1 ({}): {:.0}s", p.name, t0.elapsed().as_secs_f64());
    let mut t = Trained {
        cfg: cfg.clone(),
        gan,
        data,
        phase1,
        p1_at_500: checkpoint_bytes(&at_500),
        p1_at_600: checkpoint_bytes(&at_600),
        models: Models::new(
            Generator::init(&cfg.dims, 0).unwrap(),
            ContentEncoder::init(&cfg.dims, 0).unwrap(),
            AppearanceEncoder::init(&cfg.dims, 0).unwrap(),
            HyperNetwork::init(&cfg.dims, 0).unwrap(),
            Fusion::Fused,
        )
        .unwrap(),
    };
    t.models = phase2(&cfg, &t, p.phase2_iters);
    t
}

#[test]
fn acceptance() {
    let full = std::env::var("GANINV_FULL").is_ok_and(|v| v == "1");
    let protocol = if full { FULL } else { REDUCED };
    let mut r = Report::default();

    criterion_1(&mut r);
    criterion_2(&mut r);

    println!("training ({} protocol)...", protocol.name);
    let t0 = Instant::now();
    let trained = train(&protocol);
    let (l2_p1, l2_full) = trained.models.heldout_l2(&trained.data.heldout).unwrap();
    let minutes = t0.elapsed().as_secs_f64() / 60.0;

    let mut x_only = trained.cfg.clone();
    x_only.fusion = Fusion::InputOnly;
    let (_, l2_x) = phase2(&x_only, &trained, protocol.phase2_iters)
        .heldout_l2(&trained.data.heldout)
        .unwrap();

    let mut d16 = trained.cfg.clone();
    d16.dims.hidden_dim = 16;
    let (_, l2_d16) = phase2(&d16, &trained, protocol.phase2_iters)
        .heldout_l2(&trained.data.heldout)
        .unwrap();

    // 6: editing and interpolation exactness, 100 cases.
    let m = &trained.models;
    let (dirs, _) = find_directions(&m.generator, 4, 2000, 6).unwrap();
    let n_held = trained.data.heldout.shape()[0];
    let inversions: Vec<_> = (0..16)
        .map(|i| m.invert(&trained.data.heldout.index(i % n_held)).unwrap())
        .collect();
    let mut rng = Rng::new(66);
    let mut failures = 0;
    for case in 0..100 {
        let a = &inversions[case % 16];
        let b = &inversions[(case * 7 + 3) % 16];
        let d = &dirs[case % dirs.len()];
        let t = rng.uniform();
        let mut ok = m.edit(a, d, 0.0).unwrap().bit_eq(&a.xhat)
            && m.interpolate(a, b, 0.0, InterpMode::Dual).unwrap().bit_eq(&a.xhat)
            && m.interpolate(a, b, 1.0, InterpMode::Dual).unwrap().bit_eq(&b.xhat);
        let wa = a.w.w.data();
        let wb = b.w.w.data();
        let lerped = lerp_latent(&a.w.w, &b.w.w, t).unwrap();
        ok &= lerped
            .data()
            .iter()
            .enumerate()
            .all(|(i, v)| v.to_bits() == ((1.0 - t) * wa[i] + t * wb[i]).to_bits());
        let lr = lerp_residuals(&a.residuals, &b.residuals, t).unwrap();
        for (j, delta) in lr.deltas.iter().enumerate() {
            let (da, db) = (a.residuals.deltas[j].data(), b.residuals.deltas[j].data());
            ok &= delta
                .data()
                .iter()
                .enumerate()
                .all(|(i, v)| v.to_bits() == ((1.0 - t) * da[i] + t * db[i]).to_bits());
        }
        let gamma = rng.normal() * 3.0;
        let edited = edit_latent(&a.w.w, d, gamma).unwrap();
        ok &= edited
            .data()
            .iter()
            .enumerate()
            .all(|(i, v)| v.to_bits() == (wa[i] + gamma * d.d.data()[i]).to_bits());
        failures += usize::from(!ok);
    }
    r.record(6, failures == 0, format!("100-case sweep, {failures} failures"));

    // 7: diagnostics.
    let stats = residual_stats(&inversions[0].residuals, &m.generator.layers).unwrap();
    let roles_ok = stats.len() == 8
        && stats.iter().enumerate().all(|(i, s)| {
            s.role
                == if i % 2 == 0 {
                    LayerRole::MainConv
                } else {
                    LayerRole::ToRgb
                }
        });
    let res = trained.cfg.dims.resolution;
    let mut maps_ok = true;
    for _ in 0..20 {
        let a = Tensor::randn(&[3, res, res], 0.5, &mut rng);
        let b = Tensor::randn(&[3, res, res], 0.5, &mut rng);
        maps_ok &= difference_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0);
        let want = channel_mean_abs(&a, &b);
        maps_ok &= difference_map(&a, &b)
            .unwrap()
            .data()
            .iter()
            .zip(&want)
            .all(|(p, q)| (p - q).abs() <= 1e-15);
    }
    let tags: Vec<_> = stats.iter().map(|s| s.role.tag()).collect();
    r.record(
        7,
        roles_ok && maps_ok,
        format!(
            "{} rows {tags:?}; m(a,a) = 0 and m = mean_c |a - b| on 20 pairs: {maps_ok}",
            stats.len()
        ),
    );

    criterion_8(&mut r);

    // 9: quality-time ordering.
    let images: Vec<_> = (0..protocol.bench_images)
        .map(|i| trained.data.heldout.index(i))
        .collect();
    let proxy = ProxyFeatureNet::new(trained.cfg.loss.proxy_seed).unwrap();
    let rows = bench(
        m,
        &images,
        &Strategy::ALL,
        &proxy,
        &BenchSettings::from_config(&trained.cfg),
        |_, _| {},
    )
    .unwrap();
    let get = |s: Strategy| rows.iter().find(|r| r.strategy == s).unwrap().metrics;
    let (p1, fl, lo) = (
        get(Strategy::Phase1Only),
        get(Strategy::Full),
        get(Strategy::LatentOptimization),
    );

    // 10: determinism, persistence and resume.
    let cfg = &trained.cfg;
    let mut again = Phase1Trainer::new(cfg, &trained.gan.generator, &trained.data).unwrap();
    let rerun = checkpoint_bytes(&drive(&mut again, DETERMINISM_ITERS, 0, RunOutputs::default(), |_| {}).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.hta");
    std::fs::write(&k, &trained.p1_at_500).unwrap();
    let mut resumed = Phase1Trainer::resume(
        cfg,
        &trained.gan.generator,
        &trained.data,
        &Checkpoint::load(&k).unwrap(),
    )
    .unwrap();
    let resumed = checkpoint_bytes(&drive(&mut resumed, RESUME_TO, 0, RunOutputs::default(), |_| {}).unwrap());
    let (archive_ok, ppm_ok) = persistence_round_trips();
    let det = rerun == trained.p1_at_500;
    let resume_ok = resumed == trained.p1_at_600;
    r.record(
        10,
        det && resume_ok && archive_ok && ppm_ok,
        format!(
            "[{} protocol] phase1 {DETERMINISM_ITERS}-iteration rerun bit-identical: {det}; resume {DETERMINISM_ITERS}->{RESUME_TO}: {resume_ok}; archive: {archive_ok}; ppm: {ppm_ok}",
            protocol.name
        ),
    );

    let live = Outcome {
        l2_phase1: l2_p1,
        l2_full,
        l2_x_only: l2_x,
        l2_d16,
        bench_images: images.len(),
        bench_l2_phase1: p1.l2,
        bench_l2_full: fl.l2,
        speedup: lo.seconds / fl.seconds,
        minutes,
    };
    if full {
        let tag = "[full protocol, this run]";
        r.record(3, live.pass_3(), format!("{tag} {}", live.detail_3()));
        r.soft(4, live.pass_4(), format!("{tag} {}", live.detail_4()));
        r.soft(5, live.pass_5(), format!("{tag} {}", live.detail_5()));
        r.record(9, live.pass_9(), format!("{tag} {}", live.detail_9()));
    } else {
        // The verdicts on the full protocol come from the archived CLI run;
        // the reduced rerun checks the same directions on a short budget.
        let arch = Outcome::archived();
        let tag = "[full protocol, archived run]";
        r.archived(3, hard_status(arch.pass_3()), format!("{tag} {}", arch.detail_3()));
        r.archived(4, soft_status(arch.pass_4()), format!("{tag} {}", arch.detail_4()));
        r.archived(5, soft_status(arch.pass_5()), format!("{tag} {}", arch.detail_5()));
        r.archived(9, hard_status(arch.pass_9()), format!("{tag} {}", arch.detail_9()));
        let tag = "reduced rerun:";
        r.note(
            3,
            hard_status(live.pass_3()),
            format!("{tag} {}", live.detail_3()),
            true,
        );
        r.note(
            4,
            soft_status(live.pass_4()),
            format!("{tag} {}", live.detail_4()),
            false,
        );
        r.note(
            5,
            soft_status(live.pass_5()),
            format!("{tag} {}", live.detail_5()),
            false,
        );
        r.note(
            9,
            hard_status(live.pass_9()),
            format!("{tag} {}", live.detail_9()),
            true,
        );
    }

    let mut archive = String::from("run,heldout_l2_phase1,heldout_l2_full\n");
    writeln!(archive, "fused-D64,{l2_p1},{l2_full}").unwrap();
    writeln!(archive, "x-only-D64,{l2_p1},{l2_x}").unwrap();
    writeln!(archive, "fused-D16,{l2_p1},{l2_d16}").unwrap();
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance_{}.csv", protocol.name));
    std::fs::write(&out, &archive).unwrap();
    let bench_out = out.with_file_name(format!("acceptance_{}_bench.csv", protocol.name));
    std::fs::write(&bench_out, bench_csv(&rows)).unwrap();

    println!();
    r.print();
    println!();
    print!("{archive}{}", bench_csv(&rows));
    println!("archived in {} and {}", out.display(), bench_out.display());

    let failed = r.live_failures();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
