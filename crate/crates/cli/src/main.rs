fn main() -> std::process::ExitCode {
    lipmotion_cli::main_with_args(std::env::args_os())
}
