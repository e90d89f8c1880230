fn main() -> std::process::ExitCode {
    egopose_cli::main_entry()
}
