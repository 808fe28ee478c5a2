fn main() {
    std::process::exit(dar_service::cli::main());
}
