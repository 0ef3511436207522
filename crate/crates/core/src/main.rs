fn main() { reachset::cli::noop(); }
