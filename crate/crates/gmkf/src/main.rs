fn main() {
    std::process::exit(gmkf::cli::run());
}
