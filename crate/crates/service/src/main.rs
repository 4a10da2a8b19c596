use clap::Parser;
use seqdesign_service::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    let stdout = std::io::stdout();
    if let Err(e) = run(cli, &mut stdout.lock()) {
        let body = serde_json::to_string(&e.body()).unwrap_or_else(|_| e.to_string());
        eprintln!("{body}");
        std::process::exit(1);
    }
}
