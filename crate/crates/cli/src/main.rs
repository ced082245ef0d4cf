fn main() {
    std::process::exit(spiked_cycles_cli::run(std::env::args_os()));
}
