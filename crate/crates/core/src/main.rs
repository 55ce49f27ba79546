fn main() {
    std::process::exit(passage_rerank::cli::run_subcommand(std::env::args_os()));
}
