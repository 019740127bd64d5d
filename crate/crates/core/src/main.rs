fn main() -> std::process::ExitCode {
    satd_vuln::cli::main()
}
