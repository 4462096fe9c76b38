use std::process::ExitCode;

use clap::Parser;
use needgraph_service::cli::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve => tokio::runtime::Runtime::new()
            .map_err(|e| {
                eprintln!("{}", serde_json::json!({"error": {"code": "runtime", "message": e.to_string()}}));
            })
            .and_then(|rt| rt.block_on(cli.serve()).map_err(|e| eprintln!("{}", e.to_json_line()))),
        _ => match cli.run_batch() {
            Ok(summary) => {
                println!("{summary}");
                Ok(())
            }
            Err(e) => {
                eprintln!("{}", e.to_json_line());
                Err(())
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(()) => ExitCode::FAILURE,
    }
}
