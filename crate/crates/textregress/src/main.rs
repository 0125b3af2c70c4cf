fn main() {
    std::process::exit(textregress::cli::run());
}
