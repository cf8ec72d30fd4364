fn main() -> std::process::ExitCode {
    nanocavity_cli::main_with_args(std::env::args_os())
}
