fn main() {
    std::process::exit(dqc_packer::cli::main_exit());
}
