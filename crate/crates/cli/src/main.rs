use clap::Parser;

fn main() {
    let cli = immse_cli::Cli::parse();
    std::process::exit(immse_cli::execute(&cli));
}
