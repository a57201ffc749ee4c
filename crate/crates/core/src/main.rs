fn main() {
    std::process::exit(itr::cli::main_entry());
}
