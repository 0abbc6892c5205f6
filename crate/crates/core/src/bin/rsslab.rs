fn main() {
    std::process::exit(rsslab::cli::main(std::env::args_os()));
}
