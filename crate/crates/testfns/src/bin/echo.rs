use std::io::{self, Read, Write};

fn main() -> io::Result<()> {
    let mut buf = [0u8; 64 * 1024];
    let mut stdin = io::stdin().lock();
    let mut stdout = io::stdout().lock();
    loop {
        let n = stdin.read(&mut buf)?;
        if n == 0 {
            break;
        }
        stdout.write_all(&buf[..n])?;
    }
    stdout.flush()
}
