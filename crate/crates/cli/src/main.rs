fn main() {
    std::process::exit(gden_cli::run_cli(std::env::args_os()));
}
