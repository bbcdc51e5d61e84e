fn main() {
    std::process::exit(pilotnet::cli::run(std::env::args_os()));
}
