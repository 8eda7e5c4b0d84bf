fn main() -> std::process::ExitCode {
    mdfn_cli::run(std::env::args_os())
}
