fn main() {
    std::process::exit(xattr_eval::cli::run(std::env::args()));
}
