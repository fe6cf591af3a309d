fn main() {
    std::process::exit(spikeflow_cli::run(std::env::args_os()));
}
