use clap::Parser;

fn main() {
    let cli = coevolve::cli::Cli::parse();
    if let Err(e) = coevolve::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
