fn main() {
    std::process::exit(falign::cli::main());
}
