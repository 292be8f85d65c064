fn main() {
    std::process::exit(hybridjd::cli::run(std::env::args_os()));
}
