// Driving the command-line front end in-process.

use ganinv::cli::run;

pub fn run_example() -> ganinv::Result<()> {
    assert_eq!(
        run(["ganinv", "dump-config", "--set", "profile=church-analog", "--seed", "3"]),
        0
    );
    assert_eq!(run(["ganinv", "frobnicate"]), 1);
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
