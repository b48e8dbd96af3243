//! Line-oriented front end. One thread per connection; each request line
//! gets exactly one response line.
//!
//! An endpoint containing `/` is a local socket path, anything else is a
//! TCP `host:port`.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
#[cfg(unix)]
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::Service;

fn is_local(endpoint: &str) -> bool {
    endpoint.contains('/')
}

enum Listener {
    Tcp(TcpListener),
    #[cfg(unix)]
    Unix(UnixListener, PathBuf),
}

pub struct ServerHandle {
    endpoint: String,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    #[cfg(unix)]
    socket_path: Option<PathBuf>,
}

impl ServerHandle {
    /// The bound endpoint (with the real port when `:0` was requested).
    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = connect(&self.endpoint);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        #[cfg(unix)]
        if let Some(p) = self.socket_path.take() {
            let _ = std::fs::remove_file(p);
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_and_join();
        }
    }
}

fn serve_connection<S: Read + Write>(service: &Service, stream: S) -> io::Result<()> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        let response = service.handle_request(line.trim_end_matches(['\r', '\n']));
        let out = reader.get_mut();
        out.write_all(response.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
}

pub fn bind(service: Arc<Service>, endpoint: &str) -> io::Result<ServerHandle> {
    let (listener, bound) = if is_local(endpoint) {
        #[cfg(unix)]
        {
            let path = PathBuf::from(endpoint);
            if path.exists() {
                std::fs::remove_file(&path)?;
            }
            (Listener::Unix(UnixListener::bind(&path)?, path), endpoint.to_string())
        }
        #[cfg(not(unix))]
        return Err(io::Error::new(io::ErrorKind::Unsupported, "local sockets need unix"));
    } else {
        let l = TcpListener::bind(endpoint)?;
        let addr = l.local_addr()?.to_string();
        (Listener::Tcp(l), addr)
    };
    #[cfg(unix)]
    let socket_path = match &listener {
        Listener::Unix(_, p) => Some(p.clone()),
        _ => None,
    };

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || {
        macro_rules! accept_loop {
            ($l:expr) => {
                for stream in $l.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(s) => {
                            let svc = service.clone();
                            thread::spawn(move || {
                                if let Err(e) = serve_connection(&svc, s) {
                                    ::log::debug!("connection closed: {e}");
                                }
                            });
                        }
                        Err(e) => ::log::warn!("accept failed: {e}"),
                    }
                }
            };
        }
        match listener {
            Listener::Tcp(l) => accept_loop!(l),
            #[cfg(unix)]
            Listener::Unix(l, _) => accept_loop!(l),
        }
    });
    ::log::info!("listening on {bound}");
    Ok(ServerHandle {
        endpoint: bound,
        stop,
        thread: Some(thread),
        #[cfg(unix)]
        socket_path,
    })
}

enum Conn {
    Tcp(TcpStream),
    #[cfg(unix)]
    Unix(UnixStream),
}

fn connect(endpoint: &str) -> io::Result<Conn> {
    if is_local(endpoint) {
        #[cfg(unix)]
        return Ok(Conn::Unix(UnixStream::connect(endpoint)?));
        #[cfg(not(unix))]
        return Err(io::Error::new(io::ErrorKind::Unsupported, "local sockets need unix"));
    }
    Ok(Conn::Tcp(TcpStream::connect(endpoint)?))
}

fn exchange<S: Read + Write>(stream: S, lines: &[String]) -> io::Result<Vec<String>> {
    let mut reader = BufReader::new(stream);
    let mut out = Vec::with_capacity(lines.len());
    for l in lines {
        let s = reader.get_mut();
        s.write_all(l.as_bytes())?;
        s.write_all(b"\n")?;
        s.flush()?;
        let mut resp = String::new();
        if reader.read_line(&mut resp)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"));
        }
        out.push(resp.trim_end().to_string());
    }
    Ok(out)
}

/// Sends request lines over one connection and returns the responses.
pub fn send_requests(endpoint: &str, lines: &[String]) -> io::Result<Vec<String>> {
    match connect(endpoint)? {
        Conn::Tcp(s) => {
            let r = exchange(&s, lines);
            let _ = s.shutdown(Shutdown::Both);
            r
        }
        #[cfg(unix)]
        Conn::Unix(s) => {
            let r = exchange(&s, lines);
            let _ = s.shutdown(Shutdown::Both);
            r
        }
    }
}

pub fn send_request(endpoint: &str, line: &str) -> io::Result<String> {
    Ok(send_requests(endpoint, &[line.to_string()])?.remove(0))
}
