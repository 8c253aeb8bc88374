use clap::Parser;
use nlma::{log_level, run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(log_level(cli.verbose, cli.quiet))
        .format_timestamp(None)
        .init();
    std::process::exit(run(&cli));
}
