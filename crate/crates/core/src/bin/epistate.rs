fn main() -> std::process::ExitCode {
    epistate::cli::main()
}
