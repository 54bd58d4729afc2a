fn main() {
    std::process::exit(impact_game::cli::main_with(std::env::args_os()));
}
