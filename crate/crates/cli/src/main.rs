fn main() {
    std::process::exit(synfp_cli::run(std::env::args_os()));
}
