fn main() {
    lorflow::cli::init_threads();
    std::process::exit(lorflow::cli::run(std::env::args_os()));
}
