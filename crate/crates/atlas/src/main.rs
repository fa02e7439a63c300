fn main() {
    if let Err(e) = atlas::cli::run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
