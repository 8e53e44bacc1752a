fn main() -> std::process::ExitCode {
    cotlab_cli::main_with_args(std::env::args_os())
}
