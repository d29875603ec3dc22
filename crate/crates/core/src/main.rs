fn main() -> std::process::ExitCode {
    cfgmorph::cli::main()
}
