fn main() {
    std::process::exit(hlan::cli::run(std::env::args_os()));
}
