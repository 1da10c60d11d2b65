fn main() {
    std::process::exit(eegshield::cli::run(std::env::args_os()));
}
