fn main() {
    std::process::exit(cpc_service::cli::run(std::env::args_os()));
}
