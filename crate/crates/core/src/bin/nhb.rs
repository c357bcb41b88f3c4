fn main() {
    std::process::exit(nhb::cli::run(std::env::args_os()));
}
