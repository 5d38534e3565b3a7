fn main() {
    std::process::exit(tfa_core::cli::dispatch(std::env::args_os()));
}
