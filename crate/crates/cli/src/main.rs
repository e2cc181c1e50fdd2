fn main() {
    std::process::exit(seqdetect_cli::run(std::env::args_os()));
}
