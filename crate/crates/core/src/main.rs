fn main() {
    std::process::exit(taotree::cli::run(std::env::args_os()));
}
