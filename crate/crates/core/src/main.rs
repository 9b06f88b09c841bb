fn main() {
    std::process::exit(igroup::cli::dispatch(std::env::args_os()));
}
