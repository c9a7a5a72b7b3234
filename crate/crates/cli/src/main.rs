fn main() {
    std::process::exit(beirnet_cli::run(std::env::args_os()));
}
