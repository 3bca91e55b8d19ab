fn main() {
    std::process::exit(fracfilter_cli::run(std::env::args_os()));
}
