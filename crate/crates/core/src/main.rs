use clap::Parser;
use sharplab_core::cli::{error_json, exit_code, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => println!("{}", serde_json::to_string_pretty(&v).expect("JSON values always serialise")),
        Err(e) => {
            eprintln!("{}", error_json(&e));
            std::process::exit(exit_code(&e));
        }
    }
}
