fn main() {
    std::process::exit(hto_sim::io::cli::main());
}
