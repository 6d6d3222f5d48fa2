fn main() {
    std::process::exit(impulse_melnikov::cli::run(std::env::args_os()));
}
