use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = hpun::cli::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    if let Err(e) = result {
        eprintln!("{}", hpun::cli::error_line(&e));
        std::process::exit(e.class().exit_code());
    }
}
