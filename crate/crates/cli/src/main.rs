fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = selmask_cli::run(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(selmask_cli::exit_code(&e));
    }
}
