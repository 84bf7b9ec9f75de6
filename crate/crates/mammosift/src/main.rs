fn main() {
    std::process::exit(mammosift::cli::run(std::env::args_os()));
}
