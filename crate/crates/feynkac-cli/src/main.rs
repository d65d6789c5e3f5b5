fn main() {
    std::process::exit(feynkac_cli::run());
}
