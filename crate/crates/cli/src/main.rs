fn main() {
    std::process::exit(grmm_cli::cli_main(std::env::args_os()));
}
