fn main() {
    std::process::exit(pointlab_cli::run(std::env::args()));
}
