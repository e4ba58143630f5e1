fn main() {
    std::process::exit(holostrip_cli::run_command(std::env::args_os()));
}
