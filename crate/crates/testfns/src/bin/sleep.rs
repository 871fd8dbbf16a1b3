use std::io::{self, Read};
use std::time::Duration;

fn main() {
    let mut input = String::new();
    io::stdin()
        .read_to_string(&mut input)
        .expect("reading stdin");
    let ms: u64 = match input.trim().parse() {
        Ok(ms) => ms,
        Err(_) => {
            eprintln!("expected a millisecond count on stdin, got {input:?}");
            std::process::exit(2);
        }
    };
    std::thread::sleep(Duration::from_millis(ms));
    print!("slept {ms}");
}
