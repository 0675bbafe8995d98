use std::io::{self, BufReader, BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use dsrl_latent::{PolicyMap, QueryError};

use crate::protocol::{encode_line, read_line_capped, LineRead, Request, Response, MAX_LINE_BYTES};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Requests written ahead of reading their responses during a batch.
const PIPELINE_WINDOW: usize = 128;

/// What the client must know about the served policy. The wire protocol has
/// no introspection, so these come from the caller's configuration and every
/// response is checked against them.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub chunk_len: usize,
    pub timeout: Duration,
}

impl ClientConfig {
    pub fn new(state_dim: usize, action_dim: usize, chunk_len: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            chunk_len,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    line: Vec<u8>,
}

struct Inner {
    conn: Option<Connection>,
    next_id: u64,
}

/// A [`PolicyMap`] backed by a policy server.
///
/// Calls are serialized over one connection. A call that fails because the
/// connection dropped is retried once on a fresh connection; timeouts are not
/// retried and leave the client to reconnect on its next call.
pub struct RemoteClient {
    addrs: Vec<SocketAddr>,
    config: ClientConfig,
    inner: Mutex<Inner>,
}

enum Failure {
    /// The connection is unusable; the call may be retried.
    Transient(String),
    Fatal(QueryError),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => Failure::Fatal(QueryError::Timeout),
            _ => Failure::Transient(e.to_string()),
        }
    }
}

impl RemoteClient {
    /// Resolves `addr` and connects eagerly so configuration errors surface
    /// here rather than on the first query.
    pub fn connect(addr: impl ToSocketAddrs, config: ClientConfig) -> Result<Self, QueryError> {
        let addrs: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| QueryError::Transport(e.to_string()))?
            .collect();
        if addrs.is_empty() {
            return Err(QueryError::Transport("address resolved to nothing".into()));
        }
        let client = Self {
            addrs,
            config,
            inner: Mutex::new(Inner { conn: None, next_id: 0 }),
        };
        let conn = client.open().map_err(|f| match f {
            Failure::Transient(m) => QueryError::Transport(m),
            Failure::Fatal(e) => e,
        })?;
        client.lock().conn = Some(conn);
        Ok(client)
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn open(&self) -> Result<Connection, Failure> {
        let mut last = None;
        for addr in &self.addrs {
            match TcpStream::connect_timeout(addr, self.config.timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(self.config.timeout))?;
                    stream.set_write_timeout(Some(self.config.timeout))?;
                    let _ = stream.set_nodelay(true);
                    return Ok(Connection {
                        reader: BufReader::new(stream.try_clone()?),
                        writer: BufWriter::new(stream),
                        line: Vec::new(),
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.map(Failure::from).unwrap_or(Failure::Transient("no address".into())))
    }

    /// Runs `n` queries, retrying the whole exchange once if the connection
    /// drops. Safe because the server is stateless.
    fn exchange(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>, QueryError> {
        let mut inner = self.lock();
        let mut attempt = 0;
        loop {
            let result = match inner.conn.take() {
                Some(conn) => Ok(conn),
                None => self.open(),
            }
            .and_then(|mut conn| {
                let first_id = inner.next_id;
                let out = self.pipeline(&mut conn, first_id, states, noises, n);
                if out.is_ok() {
                    inner.conn = Some(conn);
                }
                out
            });
            inner.next_id = inner.next_id.wrapping_add(n as u64);
            match result {
                Ok(actions) => return Ok(actions),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) if attempt > 0 => return Err(QueryError::Transport(msg)),
                Err(Failure::Transient(_)) => attempt += 1,
            }
        }
    }

    fn pipeline(
        &self,
        conn: &mut Connection,
        first_id: u64,
        states: &[f64],
        noises: &[f64],
        n: usize,
    ) -> Result<Vec<f64>, Failure> {
        let (sd, ld) = (self.config.state_dim, self.latent_dim());
        let mut out = Vec::with_capacity(n * ld);
        let mut start = 0;
        while start < n {
            let end = (start + PIPELINE_WINDOW).min(n);
            for i in start..end {
                let req = Request {
                    id: first_id.wrapping_add(i as u64),
                    state: states[i * sd..(i + 1) * sd].to_vec(),
                    noise: noises[i * ld..(i + 1) * ld].to_vec(),
                };
                let line = encode_line(&req, &[&req.state, &req.noise])
                    .map_err(|e| Failure::Fatal(QueryError::Protocol(e)))?;
                if line.len() > MAX_LINE_BYTES {
                    return Err(Failure::Fatal(QueryError::Protocol("request exceeds the line cap".into())));
                }
                conn.writer.write_all(&line)?;
            }
            conn.writer.flush()?;
            for i in start..end {
                out.extend(self.read_response(conn, first_id.wrapping_add(i as u64))?);
            }
            start = end;
        }
        Ok(out)
    }

    fn read_response(&self, conn: &mut Connection, id: u64) -> Result<Vec<f64>, Failure> {
        match read_line_capped(&mut conn.reader, &mut conn.line, MAX_LINE_BYTES)? {
            LineRead::Eof => return Err(Failure::Transient("server closed the connection".into())),
            LineRead::TooLong => return Err(Failure::Fatal(QueryError::Protocol("response exceeds the line cap".into()))),
            LineRead::Line => {}
        }
        let resp: Response = serde_json::from_slice(&conn.line)
            .map_err(|e| Failure::Fatal(QueryError::Protocol(format!("unreadable response: {e}"))))?;
        if resp.id != Some(id) {
            // an error without an id still explains what went wrong
            if let (None, Some(msg)) = (resp.id, resp.error) {
                return Err(Failure::Fatal(QueryError::Remote(msg)));
            }
            return Err(Failure::Fatal(QueryError::Protocol(format!(
                "response id {:?} does not match request {id}",
                resp.id
            ))));
        }
        match (resp.action, resp.error) {
            (Some(a), None) if a.len() == self.latent_dim() => Ok(a),
            (Some(a), None) => Err(Failure::Fatal(QueryError::Dimension {
                what: "remote action",
                expected: self.latent_dim(),
                got: a.len(),
            })),
            (None, Some(msg)) => Err(Failure::Fatal(QueryError::Remote(msg))),
            _ => Err(Failure::Fatal(QueryError::Protocol("response needs exactly one of action and error".into()))),
        }
    }
}

impl PolicyMap for RemoteClient {
    fn state_dim(&self) -> usize {
        self.config.state_dim
    }

    fn action_dim(&self) -> usize {
        self.config.action_dim
    }

    fn chunk_len(&self) -> usize {
        self.config.chunk_len
    }

    fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
        self.decode_batch(state, noise, 1)
    }

    fn decode_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>, QueryError> {
        for (what, got, expected) in [("state batch", states.len(), n * self.state_dim()), ("noise batch", noises.len(), n * self.latent_dim())] {
            if got != expected {
                return Err(QueryError::Dimension { what, expected, got });
            }
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        self.exchange(states, noises, n)
    }
}
