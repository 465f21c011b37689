fn main() {
    std::process::exit(specsurg::cli::run(std::env::args_os()));
}
