use clap::Parser;

fn main() {
    let cli = foodweb_cli::Cli::parse();
    std::process::exit(foodweb_cli::run(cli));
}
