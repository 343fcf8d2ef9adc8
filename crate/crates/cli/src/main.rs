use clap::Parser;

use sconv::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("sconv: {e}");
        std::process::exit(e.exit_code());
    }
}
