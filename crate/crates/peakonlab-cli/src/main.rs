use std::process::ExitCode;

fn main() -> ExitCode {
    let env_out = std::env::var_os(peakonlab_cli::config::OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(Into::into);
    let code = peakonlab_cli::main_with(std::env::args_os(), env_out);
    ExitCode::from(code as u8)
}
