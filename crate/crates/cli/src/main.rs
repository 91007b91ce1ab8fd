use clap::Parser;

fn main() {
    let cli = rssi_locus_cli::Cli::parse();
    if let Err(e) = rssi_locus_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
