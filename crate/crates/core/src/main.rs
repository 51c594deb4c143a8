fn main() {
    std::process::exit(pagelink::cli::run(std::env::args_os()));
}
