fn main() {
    std::process::exit(dcfds::cli::run(std::env::args_os()));
}
