fn main() {
    std::process::exit(vidsum::cli::run(std::env::args_os()));
}
