fn main() {
    std::process::exit(mixed_rrr::cli::run(std::env::args_os()));
}
