fn main() {
    std::process::exit(cmc_explore::cli::run());
}
