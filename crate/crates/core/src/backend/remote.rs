//! Client for out-of-process cloze models.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::wire::{decode_response, encode_request};
use super::{BackendError, ClozeBackend, ClozeFill, ClozeRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// One JSON request per HTTP POST body (plain `http://` only).
    Http { url: String },
    /// JSON lines over a TCP connection.
    Tcp { addr: String },
    /// JSON lines over a child process's stdin/stdout.
    Process { program: String, args: Vec<String> },
}

impl Transport {
    /// Parses `http://...`, `tcp://host:port` or `exec:program arg...`.
    pub fn parse(endpoint: &str) -> Result<Self, String> {
        if endpoint.starts_with("http://") {
            Ok(Transport::Http {
                url: endpoint.to_owned(),
            })
        } else if let Some(addr) = endpoint.strip_prefix("tcp://") {
            Ok(Transport::Tcp { addr: addr.to_owned() })
        } else if let Some(cmd) = endpoint.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace().map(str::to_owned);
            let program = parts.next().ok_or("exec: endpoint needs a program")?;
            Ok(Transport::Process {
                program,
                args: parts.collect(),
            })
        } else {
            Err(format!(
                "unsupported endpoint `{endpoint}` (expected http://, tcp:// or exec:)"
            ))
        }
    }

    fn describe(&self) -> String {
        match self {
            Transport::Http { url } => url.clone(),
            Transport::Tcp { addr } => format!("tcp://{addr}"),
            Transport::Process { program, args } => {
                let mut s = format!("exec:{program}");
                for a in args {
                    s.push(' ');
                    s.push_str(a);
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub transport: Transport,
    /// Upper bound on concurrent requests (and pooled connections).
    pub max_in_flight: usize,
    /// Extra attempts after a retriable failure.
    pub retries: usize,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(transport: Transport) -> Self {
        Self {
            transport,
            max_in_flight: 4,
            retries: 2,
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(50),
        }
    }
}

struct LineConn {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Drop for LineConn {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl LineConn {
    fn round_trip(&mut self, line: &str) -> Result<String, BackendError> {
        let io = |e: std::io::Error| BackendError::Unavailable(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.write_all(b"\n").map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(io)? == 0 {
            return Err(BackendError::Unavailable("connection closed by server".into()));
        }
        Ok(reply)
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Talks the JSON wire protocol to a model server.
///
/// Up to `max_in_flight` requests run concurrently; each request gets its
/// own connection for the whole round trip, so answers never interleave.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: Option<ureq::Agent>,
    idle: Mutex<Vec<LineConn>>,
    permits: Permits,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("transport", &self.config.transport).finish()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = matches!(config.transport, Transport::Http { .. }).then(|| {
            ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .build()
                .into()
        });
        let permits = Permits {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Self {
            config,
            agent,
            idle: Mutex::new(Vec::new()),
            permits,
        }
    }

    pub fn connect(endpoint: &str) -> Result<Self, String> {
        Ok(Self::new(RemoteConfig::new(Transport::parse(endpoint)?)))
    }

    fn open(&self) -> Result<LineConn, BackendError> {
        let unavailable = |e: std::io::Error| BackendError::Unavailable(e.to_string());
        match &self.config.transport {
            Transport::Tcp { addr } => {
                let target = addr
                    .to_socket_addrs()
                    .map_err(unavailable)?
                    .next()
                    .ok_or_else(|| BackendError::Unavailable(format!("cannot resolve {addr}")))?;
                let stream = TcpStream::connect_timeout(&target, self.config.timeout).map_err(unavailable)?;
                stream.set_read_timeout(Some(self.config.timeout)).map_err(unavailable)?;
                stream.set_nodelay(true).map_err(unavailable)?;
                let reader = stream.try_clone().map_err(unavailable)?;
                Ok(LineConn {
                    reader: BufReader::new(Box::new(reader)),
                    writer: Box::new(stream),
                    child: None,
                })
            }
            Transport::Process { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unavailable)?;
                let stdin = child.stdin.take().ok_or_else(|| BackendError::Unavailable("no stdin".into()))?;
                let stdout = child.stdout.take().ok_or_else(|| BackendError::Unavailable("no stdout".into()))?;
                Ok(LineConn {
                    reader: BufReader::new(Box::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                })
            }
            Transport::Http { .. } => unreachable!("http requests do not use line connections"),
        }
    }

    fn attempt_stream(&self, request: &ClozeRequest, line: &str) -> Result<Vec<ClozeFill>, BackendError> {
        let pooled = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => self.open()?,
        };
        // a connection that failed mid-exchange is dropped, not pooled
        let reply = conn.round_trip(line)?;
        let fills = decode_response(request, &reply)?;
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).push(conn);
        Ok(fills)
    }

    fn attempt_http(&self, request: &ClozeRequest, url: &str, body: &str) -> Result<Vec<ClozeFill>, BackendError> {
        let agent = self.agent.as_ref().expect("http transport has an agent");
        let mut response = agent
            .post(url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code >= 500 || code == 429 => {
                    BackendError::Unavailable(format!("server returned HTTP {code}"))
                }
                ureq::Error::StatusCode(code) => {
                    BackendError::MalformedResponse(format!("server rejected the request with HTTP {code}"))
                }
                ureq::Error::BadUri(u) => BackendError::InvalidRequest(format!("bad endpoint uri {u}")),
                other => BackendError::Unavailable(other.to_string()),
            })?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        decode_response(request, &text)
    }
}

impl ClozeBackend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}", self.config.transport.describe())
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        request.validate()?;
        let body = encode_request(request);
        let _permit = self.permits.acquire();
        let mut attempt = 0;
        loop {
            let result = match &self.config.transport {
                Transport::Http { url } => self.attempt_http(request, url, &body),
                _ => self.attempt_stream(request, &body),
            };
            match result {
                Err(e) if e.is_retriable() && attempt < self.config.retries => {
                    attempt += 1;
                    log::warn!("request {} failed ({e}); retry {attempt}", request.request_id);
                    std::thread::sleep(self.config.backoff * attempt as u32);
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            Transport::parse("http://localhost:8080/fill").unwrap(),
            Transport::Http {
                url: "http://localhost:8080/fill".into()
            }
        );
        assert_eq!(
            Transport::parse("tcp://127.0.0.1:9000").unwrap(),
            Transport::Tcp {
                addr: "127.0.0.1:9000".into()
            }
        );
        assert_eq!(
            Transport::parse("exec:python3 serve.py --gpu").unwrap(),
            Transport::Process {
                program: "python3".into(),
                args: vec!["serve.py".into(), "--gpu".into()]
            }
        );
        assert!(Transport::parse("ftp://x").is_err());
        assert!(Transport::parse("exec:").is_err());
    }

    #[test]
    fn identity_names_the_endpoint() {
        let b = RemoteBackend::connect("tcp://127.0.0.1:1").unwrap();
        assert_eq!(b.identity(), "remote:tcp://127.0.0.1:1");
    }
}
