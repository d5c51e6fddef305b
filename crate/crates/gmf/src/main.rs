fn main() {
    std::process::exit(gmf::cli::run(std::env::args_os()));
}
