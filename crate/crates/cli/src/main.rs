fn main() {
    let code = rfid::run(std::env::args_os());
    std::process::exit(code);
}
