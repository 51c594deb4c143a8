//! HTTP front ends: the retrieval endpoint and a provider endpoint that
//! exposes any [`Handler`] over the wire protocol.
//!
//! Retrieval routes:
//! - `POST /retrieve` with `{"query": .., "k": ..?, "qid": ..?}` returns a
//!   `QueryTrace`.
//! - `GET /health` returns the index checksum and provider liveness.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;
use tiny_http::{Header, Method, Response, Server};

use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::protocol::{self, Handler};
use crate::providers::ConnectionPool;

const MAX_BODY: u64 = 4 << 20;

/// A running server. Dropping it stops the workers.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the workers exit (i.e. forever, unless another thread
    /// unblocks the listener).
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

type Route = dyn Fn(&Method, &str, &[u8]) -> (u16, String) + Send + Sync;

fn spawn(addr: &str, workers: usize, route: Arc<Route>) -> Result<ServerHandle> {
    let server = Server::http(addr).map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Config(format!("{addr} is not an IP address")))?;
    let server = Arc::new(server);
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let route = Arc::clone(&route);
            std::thread::spawn(move || {
                while let Ok(mut req) = server.recv() {
                    let mut body = Vec::new();
                    let read = req.as_reader().take(MAX_BODY).read_to_end(&mut body);
                    let (status, text) = match read {
                        Ok(_) => {
                            let path = req.url().split('?').next().unwrap_or("").to_string();
                            route(req.method(), &path, &body)
                        }
                        Err(e) => (400, json!({ "error": e.to_string() }).to_string()),
                    };
                    let header = Header::from_bytes("content-type", "application/json").expect("static header");
                    let _ = req.respond(Response::from_string(text).with_status_code(status).with_header(header));
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr: bound,
        server,
        workers,
    })
}

#[derive(Deserialize)]
struct RetrieveBody {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    qid: Option<String>,
}

/// Serves `pipeline` on `addr` (use port 0 for an ephemeral port).
/// `pool` holds the provider connections reported by `/health`.
pub fn serve_retrieval(
    pipeline: Arc<Pipeline>,
    pool: Arc<ConnectionPool>,
    addr: &str,
    workers: usize,
) -> Result<ServerHandle> {
    let route = move |method: &Method, path: &str, body: &[u8]| -> (u16, String) {
        match (method, path) {
            (Method::Get, "/health") => {
                let providers: Vec<_> = pool
                    .liveness()
                    .into_iter()
                    .map(|(name, alive)| json!({ "provider": name, "alive": alive }))
                    .collect();
                let body = json!({
                    "status": "ok",
                    "index_checksum": pipeline.index().corpus_checksum(),
                    "passages": pipeline.store().len(),
                    "config_fingerprint": pipeline.fingerprint(),
                    "providers": providers,
                });
                (200, body.to_string())
            }
            (Method::Post, "/retrieve") => {
                let req: RetrieveBody = match serde_json::from_slice(body) {
                    Ok(r) => r,
                    Err(e) => return (400, json!({ "error": format!("bad request: {e}") }).to_string()),
                };
                let k = req.k.unwrap_or(pipeline.config().k_final);
                match pipeline.retrieve_with(req.qid.as_deref(), &req.query, k) {
                    Ok(trace) => (200, serde_json::to_string(&trace).expect("trace serializes")),
                    Err(e @ (Error::Config(_) | Error::Format(_))) => {
                        (400, json!({ "error": e.to_string() }).to_string())
                    }
                    Err(e) => (500, json!({ "error": e.to_string() }).to_string()),
                }
            }
            (_, "/health" | "/retrieve") => (405, json!({ "error": "method not allowed" }).to_string()),
            _ => (404, json!({ "error": "not found" }).to_string()),
        }
    };
    spawn(addr, workers, Arc::new(route))
}

/// Exposes `handler` over HTTP: `POST /` with a protocol request body.
pub fn serve_provider<H: Handler + 'static>(handler: Arc<H>, addr: &str, workers: usize) -> Result<ServerHandle> {
    let route = move |method: &Method, _path: &str, body: &[u8]| -> (u16, String) {
        if *method != Method::Post {
            return (405, json!({ "error": "method not allowed" }).to_string());
        }
        let response = match serde_json::from_slice::<protocol::Request>(body) {
            Ok(req) => handler.handle(&req),
            Err(e) => protocol::Response::error(format!("bad request: {e}")),
        };
        (200, serde_json::to_string(&response).expect("response serializes"))
    };
    spawn(addr, workers, Arc::new(route))
}
