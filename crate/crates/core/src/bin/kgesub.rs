fn main() {
    std::process::exit(kge_subsampling::cli::main_with_args(std::env::args_os()));
}
