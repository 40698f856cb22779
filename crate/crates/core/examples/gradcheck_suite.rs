// The complete finite-difference suite: every primitive op and every model
// composite at five seeds.

use ganinv::gradsuite::{run_suite, TOLERANCE};

pub fn run_example() -> ganinv::Result<()> {
    let t = std::time::Instant::now();
    let cases = run_suite(|c| {
        if c.seed == 7 {
            println!("{:<24} {:.2e}", c.name, c.report.max_relative_error);
        }
    })?;
    let worst = cases.iter().map(|c| c.report.max_relative_error).fold(0.0, f64::max);
    println!(
        "{} cases in {:.2}s, worst {worst:.2e}, tolerance {TOLERANCE:e}",
        cases.len(),
        t.elapsed().as_secs_f64()
    );
    assert!(cases.iter().all(|c| c.passed()));
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
