fn main() {
    std::process::exit(ltsflow::cli::main_from_env());
}
