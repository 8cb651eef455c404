fn main() {
    std::process::exit(parasynth::cli::run(std::env::args_os()));
}
