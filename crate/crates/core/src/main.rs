use clap::Parser;

fn main() {
    let cli = causalbench::cli::Cli::parse();
    if let Err(e) = causalbench::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(causalbench::cli::exit_code(&e));
    }
}
