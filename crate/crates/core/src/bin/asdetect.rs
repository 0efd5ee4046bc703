fn main() {
    std::process::exit(asdetect::cli::run(std::env::args_os()));
}
