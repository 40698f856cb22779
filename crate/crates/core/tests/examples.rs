// Every example under examples/ runs to completion.

#[allow(dead_code)]
mod autodiff {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/autodiff.rs"));
}

#[test]
fn autodiff_runs() {
    autodiff::run_example().expect("autodiff example should run");
}

#[allow(dead_code)]
mod bench {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/bench.rs"));
}

#[test]
fn bench_runs() {
    bench::run_example().expect("bench example should run");
}

#[allow(dead_code)]
mod cli {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cli.rs"));
}

#[test]
fn cli_runs() {
    cli::run_example().expect("cli example should run");
}

#[allow(dead_code)]
mod diagnostics {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/diagnostics.rs"));
}

#[test]
fn diagnostics_runs() {
    diagnostics::run_example().expect("diagnostics example should run");
}

#[allow(dead_code)]
mod edit_and_interpolate {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/edit_and_interpolate.rs"));
}

#[test]
fn edit_and_interpolate_runs() {
    edit_and_interpolate::run_example().expect("edit_and_interpolate example should run");
}

#[allow(dead_code)]
mod formats {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/formats.rs"));
}

#[test]
fn formats_runs() {
    formats::run_example().expect("formats example should run");
}

#[allow(dead_code)]
mod generator_and_hypernet {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/generator_and_hypernet.rs"
    ));
}

#[test]
fn generator_and_hypernet_runs() {
    generator_and_hypernet::run_example().expect("generator_and_hypernet example should run");
}

#[allow(dead_code)]
mod gradcheck_suite {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gradcheck_suite.rs"));
}

#[test]
fn gradcheck_suite_runs() {
    gradcheck_suite::run_example().expect("gradcheck_suite example should run");
}

#[allow(dead_code)]
mod invert_image {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/invert_image.rs"));
}

#[test]
fn invert_image_runs() {
    invert_image::run_example().expect("invert_image example should run");
}

#[allow(dead_code)]
mod metrics {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/metrics.rs"));
}

#[test]
fn metrics_runs() {
    metrics::run_example().expect("metrics example should run");
}

#[allow(dead_code)]
mod pretrain_gan {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pretrain_gan.rs"));
}

#[test]
fn pretrain_gan_runs() {
    pretrain_gan::run_example().expect("pretrain_gan example should run");
}

#[allow(dead_code)]
mod train_phases {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/train_phases.rs"));
}

#[test]
fn train_phases_runs() {
    train_phases::run_example().expect("train_phases example should run");
}
