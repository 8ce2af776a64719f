fn main() {
    std::process::exit(consynth::cli::run(std::env::args_os()));
}
