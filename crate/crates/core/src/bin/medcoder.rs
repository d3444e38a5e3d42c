use std::process::ExitCode;

fn main() -> ExitCode {
    medcoder::cli::main()
}
