fn main() {
    std::process::exit(transinit::cli::run_from_args(std::env::args_os()));
}
