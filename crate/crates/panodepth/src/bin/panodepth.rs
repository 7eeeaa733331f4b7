fn main() {
    std::process::exit(panodepth::cli::main());
}
