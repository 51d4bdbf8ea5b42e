fn main() {
    std::process::exit(survscan::cli::run(std::env::args_os()));
}
