fn main() {
    std::process::exit(calicausal::cli::run(std::env::args_os()));
}
