fn main() {
    std::process::exit(ymlab::harness::run_command(std::env::args_os()));
}
