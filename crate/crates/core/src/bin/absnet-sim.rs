use clap::Parser;

fn main() {
    let cli = absnet::cli::Cli::parse();
    std::process::exit(absnet::cli::main_with(cli));
}
