fn main() {
    std::process::exit(vbdiar::cli::main_entry());
}
