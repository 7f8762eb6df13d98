fn main() {
    std::process::exit(beatgan_cli::run(std::env::args_os()));
}
