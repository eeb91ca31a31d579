use clap::Parser;

use rode_density::{configure_threads, merge, resolve, run, Cli, CliError};

fn main() {
    let cli = Cli::parse();
    let result = configure_threads(std::env::var("RODE_THREADS").ok())
        .and_then(|_| merge(&cli))
        .and_then(|cfg| resolve(&cfg))
        .and_then(|plan| run(&plan));
    match result {
        Ok(summary) => eprintln!("{summary}"),
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.to_json());
    std::process::exit(e.exit_code());
}
