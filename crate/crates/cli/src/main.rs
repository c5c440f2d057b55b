fn main() {
    if let Err(err) = proxitrace_cli::app::run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
