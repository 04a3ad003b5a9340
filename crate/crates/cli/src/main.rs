use std::io;

fn main() {
    env_logger::init();
    let code = smforge_cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
