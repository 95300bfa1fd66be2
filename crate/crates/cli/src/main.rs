fn main() {
    std::process::exit(framekit_cli::run(std::env::args_os()));
}
