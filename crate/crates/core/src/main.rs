fn main() {
    std::process::exit(curriculum::cli::run(std::env::args_os()));
}
