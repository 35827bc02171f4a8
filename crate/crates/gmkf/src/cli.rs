//! Command-line entry points. See the crate README for usage.

/// Run the CLI and return the process exit code.
pub fn run() -> i32 {
    eprintln!("CLI not wired up yet");
    2
}
