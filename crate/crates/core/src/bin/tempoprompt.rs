fn main() {
    tempoprompt::cli::init_threads();
    let code = tempoprompt::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
