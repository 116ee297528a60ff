use clap::Parser;

fn main() {
    if let Err(e) = ipk_cli::run(ipk_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
