fn main() {
    std::process::exit(codecsplat::cli::run(std::env::args_os()));
}
