fn main() {
    std::process::exit(rwre_lab::cli::main(std::env::args().collect()))
}
