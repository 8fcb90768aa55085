fn main() -> std::process::ExitCode {
    hrt1::cli::main()
}
