fn main() {
    std::process::exit(diva::cli::main_entry());
}
