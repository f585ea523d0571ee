fn main() {
    std::process::exit(ledgerloop::cli::run_cli(std::env::args_os()));
}
