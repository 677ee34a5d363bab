use clap::Parser;

fn main() {
    let args = trotter_shuffle::cli::Args::parse();
    std::process::exit(trotter_shuffle::cli::execute(&args));
}
