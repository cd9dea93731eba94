fn main() { std::process::exit(blind_demix::cli::main_entry()); }
