use clap::Parser;
use iontrap_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|o| o.write_files().map(|_| o));
    match outcome {
        Ok(o) => print!("{}", o.stdout),
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).unwrap_or_else(|_| e.to_string()));
            std::process::exit(e.exit_code());
        }
    }
}
