fn main() {
    std::process::exit(haarint::cli::run());
}
