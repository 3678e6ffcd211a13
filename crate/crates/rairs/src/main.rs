use std::process::ExitCode;

fn main() -> ExitCode {
    // Die quietly when a pipe closes early (`rairs stats ... | head`),
    // like any other command-line filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    rairs::cli::run(std::env::args_os().collect())
}
