fn main() {
    std::process::exit(aidr_cli::run(std::env::args_os()));
}
