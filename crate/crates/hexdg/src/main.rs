fn main() {
    std::process::exit(hexdg::cli::run());
}
