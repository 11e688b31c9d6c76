use std::io::{stderr, stdout};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSDDP_LOG", "error")).init();
    let code = msddp::cli::run(std::env::args_os(), &mut stdout(), &mut stderr());
    std::process::exit(code);
}
