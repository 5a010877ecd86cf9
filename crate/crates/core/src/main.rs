fn main() {
    std::process::exit(forward_perf::cli::run_command(std::env::args_os()));
}
