use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use dsrl_latent::PolicyMap;
use thiserror::Error;

use crate::protocol::{encode_line, parse_request, read_line_capped, LineRead, Response, MAX_LINE_BYTES};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("could not bind policy server: {0}")]
    Bind(#[source] io::Error),
}

struct Shared {
    policy: Arc<dyn PolicyMap>,
    stop: AtomicBool,
    served: AtomicU64,
    connections: Mutex<Vec<TcpStream>>,
}

/// A running policy server. Dropping it stops accepting and closes every
/// open connection.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(policy: Arc<dyn PolicyMap>, addr: impl ToSocketAddrs) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).map_err(ServerError::Bind)?;
        let addr = listener.local_addr().map_err(ServerError::Bind)?;
        let shared = Arc::new(Shared {
            policy,
            stop: AtomicBool::new(false),
            served: AtomicU64::new(0),
            connections: Mutex::new(Vec::new()),
        });
        let accept_shared = Arc::clone(&shared);
        let accept = thread::Builder::new()
            .name("policy-accept".into())
            .spawn(move || accept_loop(listener, accept_shared))
            .map_err(ServerError::Bind)?;
        Ok(Self {
            addr,
            shared,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Number of requests answered with an action so far.
    pub fn requests_served(&self) -> u64 {
        self.shared.served.load(Ordering::Relaxed)
    }

    /// Blocks until the accept loop exits, which only happens on shutdown.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        for conn in self.shared.connections.lock().unwrap_or_else(|e| e.into_inner()).drain(..) {
            let _ = conn.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let _ = stream.set_nodelay(true);
        if let Ok(handle) = stream.try_clone() {
            let mut conns = shared.connections.lock().unwrap_or_else(|e| e.into_inner());
            conns.retain(|c| c.peer_addr().is_ok());
            conns.push(handle);
        }
        let shared = Arc::clone(&shared);
        let _ = thread::Builder::new()
            .name("policy-conn".into())
            .spawn(move || {
                let _ = serve_connection(stream, &shared);
            });
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut line = Vec::new();
    loop {
        // answer everything already buffered before blocking on the socket
        if reader.buffer().is_empty() {
            writer.flush()?;
        }
        match read_line_capped(&mut reader, &mut line, MAX_LINE_BYTES)? {
            LineRead::Eof => break,
            LineRead::TooLong => {
                let msg = format!("message exceeds {MAX_LINE_BYTES} bytes; closing connection");
                if let Ok(bytes) = encode_line(&Response::error(None, msg), &[]) {
                    writer.write_all(&bytes)?;
                }
                break;
            }
            LineRead::Line if line.iter().all(u8::is_ascii_whitespace) => continue,
            LineRead::Line => {
                let response = answer(shared, &line);
                let bytes = match encode_line(&response, &[response.action.as_deref().unwrap_or(&[])]) {
                    Ok(b) => b,
                    Err(e) => encode_line(&Response::error(response.id, e), &[]).expect("error responses always encode"),
                };
                writer.write_all(&bytes)?;
            }
        }
    }
    writer.flush()?;
    let _ = writer.get_ref().shutdown(Shutdown::Both);
    Ok(())
}

fn answer(shared: &Shared, line: &[u8]) -> Response {
    let req = match parse_request(line) {
        Ok(r) => r,
        Err((id, msg)) => return Response::error(id, msg),
    };
    let p = &shared.policy;
    if req.state.len() != p.state_dim() {
        return Response::error(
            Some(req.id),
            format!("state has dimension {}, expected {}", req.state.len(), p.state_dim()),
        );
    }
    if req.noise.len() != p.latent_dim() {
        return Response::error(
            Some(req.id),
            format!("noise has dimension {}, expected {}", req.noise.len(), p.latent_dim()),
        );
    }
    match p.decode(&req.state, &req.noise) {
        Ok(action) => {
            shared.served.fetch_add(1, Ordering::Relaxed);
            Response::action(req.id, action)
        }
        Err(e) => Response::error(Some(req.id), e.to_string()),
    }
}
