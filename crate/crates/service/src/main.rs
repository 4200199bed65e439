use std::process::ExitCode;

use clap::Parser;

use gebi::cli::{dispatch, Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Serve {
        host,
        port,
        data_root,
        workers,
    } = &cli.command
    {
        let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
        return match rt.block_on(gebi::server::serve(host, *port, data_root, *workers)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: stage serve: {e}");
                ExitCode::FAILURE
            }
        };
    }
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: stage {}: {}", e.stage, e.message);
            ExitCode::FAILURE
        }
    }
}
