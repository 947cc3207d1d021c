use std::io::Write;

use clap::Parser;
use holdmeter_gateway::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli, |k| std::env::var(k).ok()) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out).expect("JSON values print");
            // a closed pipe (e.g. `| head`) is not an error worth a panic
            let _ = writeln!(std::io::stdout(), "{text}");
        }
        Err(e) => {
            let text = serde_json::to_string_pretty(&e.body()).expect("JSON values print");
            let _ = writeln!(std::io::stderr(), "{text}");
            std::process::exit(e.exit_code());
        }
    }
}
