//! JSON-lines oracle wire protocol over TCP.
//!
//! One UTF-8 JSON object per line. Request: `{"id": N, "x": [floats]}`.
//! Response: `{"id": N, "label": L}`; a malformed line gets
//! `{"id": null, "error": "parse"}` and the connection stays open.
//! Responses may arrive out of order and are matched by id.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Classifier, FeatureVector};
use crate::threat::{InProcessOracle, Oracle};

#[derive(Debug, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub x: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Serves a classifier as a label-only oracle.
pub struct OracleServer {
    listener: TcpListener,
    oracle: Arc<InProcessOracle>,
    shutdown: Arc<AtomicBool>,
}

impl OracleServer {
    /// Binds the listener; a busy port surfaces as a transport error.
    pub fn bind(addr: &str, classifier: Classifier) -> Result<Self> {
        let listener = TcpListener::bind(addr)
            .map_err(|e| Error::Transport(format!("cannot bind {addr}: {e}")))?;
        Ok(OracleServer {
            listener,
            oracle: Arc::new(InProcessOracle::new(classifier)),
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn oracle(&self) -> Arc<InProcessOracle> {
        Arc::clone(&self.oracle)
    }

    /// Handle that can stop a running server from another thread.
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle {
            flag: Arc::clone(&self.shutdown),
            addr: self.listener.local_addr().ok(),
        }
    }

    /// Accept loop; one thread per connection. Returns once shut down.
    pub fn run(&self) -> Result<()> {
        for incoming in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match incoming {
                Ok(s) => s,
                Err(_) => continue,
            };
            let oracle = Arc::clone(&self.oracle);
            std::thread::spawn(move || {
                let _ = serve_connection(stream, &oracle);
            });
        }
        Ok(())
    }
}

/// Stops the accept loop; a wake-up connection unblocks `accept`.
pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
    addr: Option<SocketAddr>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
        if let Some(addr) = self.addr {
            let _ = TcpStream::connect(addr);
        }
    }
}

fn serve_connection(stream: TcpStream, oracle: &InProcessOracle) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<WireRequest>(&line) {
            Err(_) => WireResponse {
                id: None,
                label: None,
                error: Some("parse".to_string()),
            },
            Ok(request) => match FeatureVector::new(request.x) {
                Err(_) => WireResponse {
                    id: Some(request.id),
                    label: None,
                    error: Some("invalid".to_string()),
                },
                Ok(x) => match oracle.query(&x) {
                    Ok(label) => WireResponse {
                        id: Some(request.id),
                        label: Some(label as i64),
                        error: None,
                    },
                    Err(e) => WireResponse {
                        id: Some(request.id),
                        label: None,
                        error: Some(e.to_string()),
                    },
                },
            },
        };
        let encoded = serde_json::to_string(&response).expect("response serializes");
        writer.write_all(encoded.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

struct ClientInner {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    /// Responses read while waiting for a different id.
    pending: HashMap<u64, i64>,
}

/// Client side of the wire protocol; implements [`Oracle`] over TCP.
pub struct RemoteOracle {
    inner: Mutex<ClientInner>,
    next_id: AtomicU64,
    count: AtomicU64,
    dim: Option<usize>,
}

impl RemoteOracle {
    pub fn connect<A: ToSocketAddrs + std::fmt::Debug>(addr: A) -> Result<Self> {
        let stream = TcpStream::connect(&addr)
            .map_err(|e| Error::Transport(format!("cannot connect {addr:?}: {e}")))?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(RemoteOracle {
            inner: Mutex::new(ClientInner {
                reader,
                writer: BufWriter::new(stream),
                pending: HashMap::new(),
            }),
            next_id: AtomicU64::new(0),
            count: AtomicU64::new(0),
            dim: None,
        })
    }
}

impl Oracle for RemoteOracle {
    fn query(&self, x: &FeatureVector) -> Result<usize> {
        if let Some(dim) = self.dim {
            if x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: x.len(),
                });
            }
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let request = WireRequest {
            id,
            x: x.values().to_vec(),
        };
        let mut inner = self.inner.lock().expect("oracle client lock");
        let encoded = serde_json::to_string(&request).expect("request serializes");
        inner
            .writer
            .write_all(encoded.as_bytes())
            .and_then(|_| inner.writer.write_all(b"\n"))
            .and_then(|_| inner.writer.flush())
            .map_err(|e| Error::Transport(format!("send failed: {e}")))?;
        loop {
            if let Some(label) = inner.pending.remove(&id) {
                self.count.fetch_add(1, Ordering::Relaxed);
                return decode_label(label);
            }
            let mut line = String::new();
            let n = inner
                .reader
                .read_line(&mut line)
                .map_err(|e| Error::Transport(format!("receive failed: {e}")))?;
            if n == 0 {
                return Err(Error::Transport("oracle closed the connection".into()));
            }
            let response: WireResponse = serde_json::from_str(line.trim_end())
                .map_err(|e| Error::Transport(format!("bad response: {e}")))?;
            match (response.id, response.label, response.error) {
                (Some(rid), Some(label), None) if rid == id => {
                    self.count.fetch_add(1, Ordering::Relaxed);
                    return decode_label(label);
                }
                (Some(rid), Some(label), None) => {
                    inner.pending.insert(rid, label);
                }
                (rid, _, Some(err)) if rid.is_none() || rid == Some(id) => {
                    return Err(Error::Transport(format!("oracle error: {err}")));
                }
                other => {
                    return Err(Error::Transport(format!(
                        "malformed oracle response: {other:?}"
                    )));
                }
            }
        }
    }

    fn query_count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

fn decode_label(label: i64) -> Result<usize> {
    usize::try_from(label)
        .map_err(|_| Error::Transport(format!("negative label {label} from oracle")))
}
