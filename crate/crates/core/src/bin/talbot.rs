fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(talbot_core::cli::cli_dispatch(&argv));
}
