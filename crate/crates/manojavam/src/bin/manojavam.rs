use clap::Parser;

fn main() {
    let cli = match manojavam::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit with its own code; route usage problems to the
            // input-error code instead.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = manojavam::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(manojavam::cli::exit_code(&e));
    }
}
