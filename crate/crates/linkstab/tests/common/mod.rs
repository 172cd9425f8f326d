//! Minimal local HTTP server for exercising the real transport.

// Each integration test binary compiles this module separately and uses a
// different subset of behaviors.
#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Clone, Copy)]
pub enum ServerBehavior {
    /// 200 with a tiny body.
    Ok,
    /// 302 with a Location header.
    Redirect,
    /// Any fixed status, empty body.
    Status(u16),
    /// Sleep before sending anything, to trip client timeouts.
    StallBeforeHeaders(Duration),
    /// Send status and headers promising a body, then never send it.
    HeadersThenStall(Duration),
}

pub struct TestServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn spawn(behavior: ServerBehavior) -> TestServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().unwrap();
        listener.set_nonblocking(true).unwrap();
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        std::thread::spawn(move || handle_connection(stream, behavior));
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        TestServer {
            addr,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, behavior: ServerBehavior) {
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    // Drain the request head; probes only ever send a GET with headers.
    let mut buf = [0u8; 2048];
    let mut head = Vec::new();
    loop {
        match stream.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => {
                head.extend_from_slice(&buf[..n]);
                if head.windows(4).any(|w| w == b"\r\n\r\n") {
                    break;
                }
            }
            Err(_) => return,
        }
    }
    match behavior {
        ServerBehavior::Ok => {
            let _ = stream
                .write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\nConnection: close\r\n\r\nok");
        }
        ServerBehavior::Redirect => {
            let _ = stream.write_all(
                b"HTTP/1.1 302 Found\r\nLocation: http://example.invalid/\r\n\
                  Content-Length: 0\r\nConnection: close\r\n\r\n",
            );
        }
        ServerBehavior::Status(code) => {
            let head = format!(
                "HTTP/1.1 {code} Whatever\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
            );
            let _ = stream.write_all(head.as_bytes());
        }
        ServerBehavior::StallBeforeHeaders(delay) => {
            std::thread::sleep(delay);
            let _ = stream
                .write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\nConnection: close\r\n\r\nok");
        }
        ServerBehavior::HeadersThenStall(hold) => {
            let _ = stream
                .write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 1000\r\nConnection: close\r\n\r\n");
            let _ = stream.flush();
            std::thread::sleep(hold);
        }
    }
}
