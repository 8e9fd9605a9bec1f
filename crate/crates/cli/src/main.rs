fn main() {
    std::process::exit(longtail_cli::run(std::env::args_os()));
}
