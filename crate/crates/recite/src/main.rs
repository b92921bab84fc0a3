fn main() -> std::process::ExitCode {
    recite::cli::main()
}
