fn main() {
    let stdout = std::io::stdout();
    let code = submatch::bench::cli_dispatch(std::env::args_os(), &mut stdout.lock());
    std::process::exit(code);
}
