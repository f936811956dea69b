#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::mpsc;
use std::thread;

pub fn ortrack<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_ortrack"))
        .args(args)
        .env_remove("ORTRACK_SERVICE_ENDPOINT")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Answers one request per `(status, body)` entry, in order, and forwards
/// each request body on the returned channel.
pub fn mock_service(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut req = vec![0u8; len];
            let _ = reader.read_exact(&mut req);
            let _ = tx.send(String::from_utf8_lossy(&req).into_owned());
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (format!("http://{addr}/"), rx)
}

/// Config using the given detection endpoint and the synthetic embedder.
pub fn service_config(dir: &Path, endpoint: &str, family: &str) -> std::path::PathBuf {
    let path = dir.join(format!("service-{family}.toml"));
    std::fs::write(
        &path,
        format!(
            "[detection]\nkind = \"service\"\nendpoint = \"{endpoint}\"\nfamily = \"{family}\"\ntimeout_ms = 2000\nretries = 0\n"
        ),
    )
    .unwrap();
    path
}
