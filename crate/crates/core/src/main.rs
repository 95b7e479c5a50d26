fn main() {
    std::process::exit(rosetta::cli::dispatch(std::env::args_os()));
}
