use clap::Parser;

fn main() {
    std::process::exit(nhsync_cli::main_with(nhsync_cli::Cli::parse()));
}
