use clap::Parser;

fn main() {
    let cli = fibercurv_cli::Cli::parse();
    std::process::exit(fibercurv_cli::run_cli(&cli));
}
