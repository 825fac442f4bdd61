fn main() {
    std::process::exit(crossview::cli::run(std::env::args()));
}
