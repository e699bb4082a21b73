use clap::Parser;

fn main() {
    let cli = ornn::cli::Cli::parse();
    match ornn::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
