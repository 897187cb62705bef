fn main() {
    std::process::exit(fblrate_cli::run(std::env::args_os()));
}
