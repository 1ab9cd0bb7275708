fn main() {
    std::process::exit(sfpca::harness::cli_main(std::env::args_os()));
}
