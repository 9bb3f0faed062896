fn main() -> std::process::ExitCode {
    tmnre::cli::main()
}
