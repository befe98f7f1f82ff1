fn main() {
    std::process::exit(mcurv::cli::run(std::env::args_os()));
}
