fn main() {
    std::process::exit(csrvolsr::cli::run());
}
