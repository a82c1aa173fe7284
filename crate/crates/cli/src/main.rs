fn main() {
    std::process::exit(spoter_vsct_cli::run(std::env::args_os()));
}
