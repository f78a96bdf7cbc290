fn main() {
    std::process::exit(pedafeed_service::cli::main());
}
