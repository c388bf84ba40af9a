fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = schreier_tower::cli::run_cli(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code);
}
