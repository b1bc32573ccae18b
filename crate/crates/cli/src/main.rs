use clap::Parser;

fn main() {
    let cli = fraclap_cli::Cli::parse();
    std::process::exit(fraclap_cli::run(cli));
}
