fn main() -> std::process::ExitCode {
    annotate_core::cli::main()
}
