use clap::Parser;

fn main() {
    let cli = dgsp_cli::Cli::parse();
    std::process::exit(dgsp_cli::run(&cli));
}
