fn main() {
    std::process::exit(offnadir::cli::run(std::env::args_os()).code());
}
