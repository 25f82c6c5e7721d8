fn main() {
    std::process::exit(thzdt::cli::run(std::env::args_os()));
}
