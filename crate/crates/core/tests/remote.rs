//! The remote backend against small in-process servers.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use cloze_core::backend::wire::{WireFill, WireRequest, WireResponse};
use cloze_core::backend::{BackendError, ClozeBackend, ClozeRequest, RemoteBackend, RemoteConfig, Transport};
use cloze_core::masking::{Granularity, MaskedText, Slot};
use cloze_core::Span;

fn request(document: &str, indices: &[usize]) -> ClozeRequest {
    let masked = MaskedText {
        text: indices.iter().map(|_| "[MASK]").collect::<Vec<_>>().join(" met "),
        sentinel: "[MASK]".into(),
        slots: indices
            .iter()
            .enumerate()
            .map(|(i, &factor_index)| Slot {
                factor_index,
                position: i * 11,
                surface: format!("surface {factor_index}"),
            })
            .collect(),
        context_scope: Granularity::SummaryLevel,
        source_span: Span::new(0, 1),
    };
    ClozeRequest::new("unit#0", document, masked)
}

/// Answers every slot with the request's document.
fn echo_document(req: &WireRequest) -> String {
    let fills = req
        .slots
        .iter()
        .map(|s| WireFill {
            factor_index: s.factor_index,
            text: req.document.clone(),
            token_probs: req.document.split_whitespace().map(|_| 0.75).collect(),
        })
        .collect();
    serde_json::to_string(&WireResponse { fills }).unwrap()
}

type Handler = Arc<dyn Fn(usize, &WireRequest) -> Option<String> + Send + Sync>;

/// JSON-lines server. The handler sees the running request count and
/// returns the reply line, or `None` to drop the connection.
fn line_server(handler: Handler) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (handler, seen) = (handler.clone(), seen.clone());
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { return };
                    let req: WireRequest = serde_json::from_str(&line).unwrap();
                    let n = seen.fetch_add(1, Ordering::SeqCst);
                    match handler(n, &req) {
                        Some(reply) => {
                            if writeln!(writer, "{reply}").is_err() {
                                return;
                            }
                        }
                        None => return,
                    }
                }
            });
        }
    });
    (addr, count)
}

type HttpHandler = Arc<dyn Fn(usize, &WireRequest) -> (u16, String) + Send + Sync>;

fn http_server(handler: HttpHandler) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/fill", listener.local_addr().unwrap());
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (handler, seen) = (handler.clone(), seen.clone());
            thread::spawn(move || serve_http(stream, &*handler, &seen));
        }
    });
    (url, count)
}

fn serve_http(stream: TcpStream, handler: &(dyn Fn(usize, &WireRequest) -> (u16, String) + Send + Sync), seen: &AtomicUsize) {
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let req: WireRequest = serde_json::from_slice(&body).unwrap();
    let (status, reply) = handler(seen.fetch_add(1, Ordering::SeqCst), &req);
    let _ = write!(
        writer,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

fn backend(transport: Transport, retries: usize) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(transport);
    cfg.retries = retries;
    cfg.backoff = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(5);
    RemoteBackend::new(cfg)
}

#[test]
fn tcp_round_trip() {
    let (addr, count) = line_server(Arc::new(|_, r| Some(echo_document(r))));
    let b = backend(Transport::Tcp { addr: addr.clone() }, 0);
    assert_eq!(b.identity(), format!("remote:tcp://{addr}"));
    let fills = b.fill(&request("the news media", &[3, 5])).unwrap();
    assert_eq!(fills.len(), 2);
    assert_eq!(fills[0].factor_index, 3);
    assert_eq!(fills[1].filled, "the news media");
    assert_eq!(fills[1].token_probs, vec![0.75; 3]);
    b.fill(&request("again", &[0])).unwrap();
    assert_eq!(count.load(Ordering::SeqCst), 2);
}

#[test]
fn concurrent_requests_do_not_cross() {
    let (addr, _) = line_server(Arc::new(|_, r| {
        thread::sleep(Duration::from_millis(1));
        Some(echo_document(r))
    }));
    let b = Arc::new(backend(Transport::Tcp { addr }, 0));
    let workers: Vec<_> = (0..8)
        .map(|t| {
            let b = b.clone();
            thread::spawn(move || {
                for i in 0..20 {
                    let doc = format!("doc {t} {i}");
                    let fills = b.fill(&request(&doc, &[i, i + 1])).unwrap();
                    assert!(fills.iter().all(|f| f.filled == doc));
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
}

#[test]
fn malformed_reply_is_not_retried() {
    let (addr, count) = line_server(Arc::new(|_, _| Some("{not json".into())));
    let b = backend(Transport::Tcp { addr }, 3);
    let err = b.fill(&request("d", &[0])).unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err:?}");
    assert_eq!(count.load(Ordering::SeqCst), 1);
}

#[test]
fn out_of_order_fills_are_rejected() {
    let (addr, _) = line_server(Arc::new(|_, r| {
        let mut reply: WireResponse = serde_json::from_str(&echo_document(r)).unwrap();
        reply.fills.reverse();
        Some(serde_json::to_string(&reply).unwrap())
    }));
    let b = backend(Transport::Tcp { addr }, 0);
    let err = b.fill(&request("d", &[0, 1])).unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn dropped_connection_is_retried() {
    // first request: hang up; afterwards answer
    let (addr, count) = line_server(Arc::new(|n, r| (n > 0).then(|| echo_document(r))));
    let b = backend(Transport::Tcp { addr }, 2);
    let fills = b.fill(&request("second time", &[0])).unwrap();
    assert_eq!(fills[0].filled, "second time");
    assert_eq!(count.load(Ordering::SeqCst), 2);
}

#[test]
fn refused_connection_is_unavailable() {
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let b = backend(Transport::Tcp { addr }, 1);
    let err = b.fill(&request("d", &[0])).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
}

#[test]
fn http_round_trip() {
    let (url, _) = http_server(Arc::new(|_, r| (200, echo_document(r))));
    let b = backend(Transport::parse(&url).unwrap(), 0);
    let fills = b.fill(&request("over http", &[1])).unwrap();
    assert_eq!(fills[0].filled, "over http");
}

#[test]
fn http_server_errors_are_retried() {
    let (url, count) = http_server(Arc::new(|n, r| {
        if n < 2 {
            (503, "busy".into())
        } else {
            (200, echo_document(r))
        }
    }));
    let b = backend(Transport::parse(&url).unwrap(), 2);
    assert!(b.fill(&request("d", &[0])).is_ok());
    assert_eq!(count.load(Ordering::SeqCst), 3);

    let (url, count) = http_server(Arc::new(|_, _| (500, "down".into())));
    let b = backend(Transport::parse(&url).unwrap(), 1);
    assert!(matches!(b.fill(&request("d", &[0])), Err(BackendError::Unavailable(_))));
    assert_eq!(count.load(Ordering::SeqCst), 2);
}

#[test]
fn http_client_errors_are_malformed() {
    let (url, count) = http_server(Arc::new(|_, _| (400, "bad".into())));
    let b = backend(Transport::parse(&url).unwrap(), 3);
    assert!(matches!(b.fill(&request("d", &[0])), Err(BackendError::MalformedResponse(_))));
    assert_eq!(count.load(Ordering::SeqCst), 1);
}

#[test]
fn child_process_transport() {
    let script = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    fills = [{"factor_index": s["factor_index"], "text": "proc", "token_probs": [0.5]} for s in req["slots"]]
    print(json.dumps({"fills": fills}), flush=True)
"#;
    let b = backend(
        Transport::Process {
            program: "python3".into(),
            args: vec!["-c".into(), script.into()],
        },
        0,
    );
    for i in 0..3 {
        let fills = b.fill(&request("d", &[i, i + 4])).unwrap();
        assert_eq!(fills[1].factor_index, i + 4);
        assert_eq!(fills[0].filled, "proc");
    }
}
