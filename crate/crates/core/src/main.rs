fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(selgen::cli::dispatch(&args));
}
