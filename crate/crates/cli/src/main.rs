fn main() {
    std::process::exit(dstruct_cli::main_with(std::env::args_os()));
}
