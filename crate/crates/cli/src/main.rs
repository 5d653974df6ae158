use clap::Parser;
use rsgame_cli::files::write_json;
use rsgame_cli::{execute, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("cannot configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let mut report = execute(&cli);
    if let Some(path) = &cli.out {
        if let Err(e) = write_json(path, &report) {
            report.fail(rsgame_cli::report::ErrorKind::Input, e);
            report.finalize();
        }
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    ExitCode::from(report.exit_code as u8)
}
