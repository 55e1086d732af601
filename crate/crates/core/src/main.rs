fn main() {
    std::process::exit(edgecast::cli::run());
}
