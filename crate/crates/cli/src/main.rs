use clap::Parser;

fn main() {
    // clap exits with code 2 on usage errors; runtime failures exit 1.
    let cli = plmr_cli::Cli::parse();
    if let Err(err) = plmr_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
