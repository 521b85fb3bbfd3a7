fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(vjump::cli::run(&argv));
}
