fn main() {
    std::process::exit(aqtv::cli::run(std::env::args_os()));
}
