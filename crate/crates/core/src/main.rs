fn main() {
    std::process::exit(gaussmin::cli::run(std::env::args_os()));
}
