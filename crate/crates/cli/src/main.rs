fn main() {
    std::process::exit(semisparse_cli::run(std::env::args_os()));
}
