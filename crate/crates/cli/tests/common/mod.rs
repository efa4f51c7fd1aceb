//! Helpers for driving the `telecg` binary as a subprocess.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub const BIN: &str = env!("CARGO_BIN_EXE_telecg");

/// A `telecg serve` child process.
pub struct ServerProc {
    child: Child,
    pub addr: String,
    pub data: PathBuf,
}

impl ServerProc {
    pub fn start(data: &Path) -> Self {
        Self::start_on(data, "127.0.0.1:0")
    }

    /// Start on a fixed address, retrying briefly while a killed
    /// predecessor's socket is released.
    pub fn start_on(data: &Path, listen: &str) -> Self {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            let mut child = Command::new(BIN)
                .args(["serve", "--listen", listen, "--log-level", "warn", "--data"])
                .arg(data)
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .expect("spawn telecg serve");
            let mut line = String::new();
            BufReader::new(child.stdout.take().unwrap())
                .read_line(&mut line)
                .unwrap();
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
                let addr = v["listening"].as_str().unwrap().to_string();
                return Self {
                    child,
                    addr,
                    data: data.to_path_buf(),
                };
            }
            let _ = child.wait();
            assert!(
                Instant::now() < deadline,
                "server failed to start on {listen}"
            );
            std::thread::sleep(Duration::from_millis(100));
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// SIGKILL: no shutdown path runs.
    pub fn kill9(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServerProc {
    fn drop(&mut self) {
        self.kill9();
    }
}

pub fn telecg(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("run telecg")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap_or(""))
        .unwrap_or_else(|e| panic!("bad JSON on stdout ({e}): {text}"))
}

/// Parse `ts_us code flags` export lines.
pub fn parse_export(text: &str) -> Vec<(u64, u16, u8)> {
    text.lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|x| x.parse::<u64>().unwrap());
            (
                it.next().unwrap(),
                it.next().unwrap() as u16,
                it.next().unwrap() as u8,
            )
        })
        .collect()
}
