fn main() {
    std::process::exit(grlin::cli::main());
}
