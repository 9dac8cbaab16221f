//! Reference implementation of the external-model line protocol.
//!
//! Modes (first argument):
//!   echo            predict the first feature of each row (default)
//!   mean            predict the mean of the FIT targets
//!   die-after <n>   exit with status 1 after answering n prediction lines
//!   garbage         answer PREDICT with a non-numeric line
//!   hang            never answer PREDICT
//!   fail-fit        answer FIT with ERR

use std::io::{self, BufRead, Write};
use std::process::exit;
use std::thread;
use std::time::Duration;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("echo");
    let die_after: usize = match mode {
        "die-after" => args.get(1).and_then(|n| n.parse().ok()).unwrap_or(0),
        _ => usize::MAX,
    };

    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut mean = 0.0;
    let mut answered = 0usize;

    while let Some(Ok(line)) = lines.next() {
        let mut words = line.split_whitespace();
        let command = words.next().unwrap_or("");
        let dims: Vec<usize> = words.filter_map(|w| w.parse().ok()).collect();
        match command {
            "FIT" => {
                let n = dims.get(1).copied().unwrap_or(0);
                let mut sum = 0.0;
                for _ in 0..n {
                    let row = lines.next().and_then(Result::ok).unwrap_or_default();
                    sum += row
                        .split_whitespace()
                        .last()
                        .and_then(|v| v.parse::<f64>().ok())
                        .unwrap_or(0.0);
                }
                mean = if n > 0 { sum / n as f64 } else { 0.0 };
                if mode == "fail-fit" {
                    writeln!(out, "ERR refusing to fit").ok();
                } else {
                    writeln!(out, "OK").ok();
                }
                out.flush().ok();
            }
            "PREDICT" => {
                let n = dims.get(1).copied().unwrap_or(0);
                for _ in 0..n {
                    let row = lines.next().and_then(Result::ok).unwrap_or_default();
                    match mode {
                        "hang" => loop {
                            thread::sleep(Duration::from_secs(3600));
                        },
                        "garbage" => {
                            writeln!(out, "not-a-number").ok();
                            out.flush().ok();
                            continue;
                        }
                        _ => {}
                    }
                    if answered == die_after {
                        out.flush().ok();
                        exit(1);
                    }
                    let value = if mode == "mean" {
                        mean
                    } else {
                        row.split_whitespace()
                            .next()
                            .and_then(|v| v.parse::<f64>().ok())
                            .unwrap_or(0.0)
                    };
                    writeln!(out, "{value:.16e}").ok();
                    out.flush().ok();
                    answered += 1;
                }
                writeln!(out, "OK").ok();
                out.flush().ok();
            }
            "QUIT" => exit(0),
            _ => {
                writeln!(out, "ERR unknown command `{command}`").ok();
                out.flush().ok();
            }
        }
    }
}
