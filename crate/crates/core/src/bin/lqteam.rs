fn main() {
    std::process::exit(lqteam::cli::main_with_args(std::env::args_os()));
}
