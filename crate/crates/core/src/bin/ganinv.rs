fn main() {
    std::process::exit(ganinv::cli::run(std::env::args_os()));
}
