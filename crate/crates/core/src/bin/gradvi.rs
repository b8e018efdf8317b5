use clap::Parser;
use gradvi::cli::{run, Cli, EXIT_INVALID};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // keep exit code 2 for non-convergence
            std::process::exit(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    std::process::exit(run(&cli));
}
