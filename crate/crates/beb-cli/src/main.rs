fn main() {
    std::process::exit(beb_cli::run(std::env::args_os()));
}
