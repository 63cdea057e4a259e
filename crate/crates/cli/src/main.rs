fn main() {
    std::process::exit(btacm_cli::run(std::env::args_os()));
}
