//! JSON wire protocol spoken by external providers and scorers, and the
//! transports that carry it.
//!
//! Every transport carries the same bodies: HTTP POSTs one request per
//! call, subprocess mode writes one request line to the child's stdin and
//! reads exactly one response line back.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    EntityLink,
    EventLink,
    Decompose,
    Correct,
    Score,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub q: String,
    pub c: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences_per_set: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompositions: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<Pair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passages: Option<Vec<String>>,
}

impl Request {
    fn bare(op: Op) -> Self {
        Self {
            op,
            text: None,
            k: None,
            sets: None,
            sentences_per_set: None,
            decompositions: None,
            pairs: None,
            passages: None,
        }
    }

    pub fn link(op: Op, text: &str, k: usize) -> Self {
        Self {
            text: Some(text.to_string()),
            k: Some(k),
            ..Self::bare(op)
        }
    }

    pub fn decompose(text: &str, sets: usize, sentences_per_set: usize) -> Self {
        Self {
            text: Some(text.to_string()),
            sets: Some(sets),
            sentences_per_set: Some(sentences_per_set),
            ..Self::bare(Op::Decompose)
        }
    }

    pub fn correct(text: &str, decompositions: Vec<Vec<String>>) -> Self {
        Self {
            text: Some(text.to_string()),
            decompositions: Some(decompositions),
            ..Self::bare(Op::Correct)
        }
    }

    pub fn score(pairs: Vec<Pair>) -> Self {
        Self {
            pairs: Some(pairs),
            ..Self::bare(Op::Score)
        }
    }

    pub fn answer(question: &str, passages: Vec<String>) -> Self {
        Self {
            text: Some(question.to_string()),
            passages: Some(passages),
            ..Self::bare(Op::Answer)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub titles: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompositions: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn titles(titles: Vec<String>) -> Self {
        Self {
            titles: Some(titles),
            ..Self::default()
        }
    }

    pub fn decompositions(sets: Vec<Vec<String>>) -> Self {
        Self {
            decompositions: Some(sets),
            ..Self::default()
        }
    }

    pub fn scores(scores: Vec<f64>) -> Self {
        Self {
            scores: Some(scores),
            ..Self::default()
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            error: Some(message.into()),
            ..Self::default()
        }
    }
}

/// Something that can answer protocol requests in-process.
pub trait Handler: Send + Sync {
    fn handle(&self, request: &Request) -> Response;
}

/// Moves one request to a provider and brings back its response.
pub trait Transport: Send + Sync {
    fn send(&self, request: &Request) -> Result<Response, ProviderError>;

    /// Cheap liveness probe used by the health endpoint.
    fn is_alive(&self) -> bool {
        true
    }

    fn describe(&self) -> String;
}

/// Where a provider lives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// In-process deterministic fallback.
    Builtin,
    /// HTTP POST to this URL.
    Http(String),
    /// Long-lived child process speaking line mode; argv form.
    Command(Vec<String>),
    /// Recorded request/response pairs.
    Replay(PathBuf),
}

impl Endpoint {
    pub fn is_builtin(&self) -> bool {
        matches!(self, Endpoint::Builtin)
    }

    /// Opens a transport for a non-builtin endpoint.
    pub fn connect(&self, timeout: Duration) -> Result<Arc<dyn Transport>> {
        Ok(match self {
            Endpoint::Builtin => return Err(Error::Config("builtin endpoint has no transport".into())),
            Endpoint::Http(url) => Arc::new(HttpTransport::new(url, timeout)),
            Endpoint::Command(argv) => Arc::new(SubprocessTransport::new(argv.clone(), timeout)?),
            Endpoint::Replay(path) => Arc::new(ReplayTransport::load(path)?),
        })
    }
}

/// A transport plus a retry budget. Transport failures are retried;
/// provider-side `{"error": ...}` responses are not.
#[derive(Clone)]
pub struct Client {
    transport: Arc<dyn Transport>,
    retries: u32,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("transport", &self.transport.describe())
            .field("retries", &self.retries)
            .finish()
    }
}

impl Client {
    pub fn new(transport: Arc<dyn Transport>, retries: u32) -> Self {
        Self { transport, retries }
    }

    pub fn call(&self, request: &Request) -> Result<Response, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.transport.send(request) {
                Ok(resp) => {
                    return match resp.error {
                        Some(message) => Err(ProviderError::Remote(message)),
                        None => Ok(resp),
                    }
                }
                Err(e @ (ProviderError::Remote(_) | ProviderError::Protocol(_))) => return Err(e),
                Err(e) if attempt >= self.retries => return Err(e),
                Err(_) => attempt += 1,
            }
        }
    }

    pub fn is_alive(&self) -> bool {
        self.transport.is_alive()
    }

    pub fn describe(&self) -> String {
        self.transport.describe()
    }
}

pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
    timeout: Duration,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.to_string(),
            agent,
            timeout,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &Request) -> Result<Response, ProviderError> {
        let body = serde_json::to_string(request).expect("request serializes");
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ProviderError::Timeout(self.timeout.as_millis() as u64),
                other => ProviderError::Unreachable(format!("{}: {other}", self.url)),
            })?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Unreachable(format!("{}: {e}", self.url)))?;
        match serde_json::from_str::<Response>(&text) {
            Ok(parsed) => Ok(parsed),
            Err(_) if !status.is_success() => Err(ProviderError::Unreachable(format!("{}: HTTP {status}", self.url))),
            Err(e) => Err(ProviderError::Protocol(format!("{}: {e}", self.url))),
        }
    }

    fn is_alive(&self) -> bool {
        // Any HTTP answer, even an error status, means the service is up.
        self.agent.get(&self.url).call().is_ok()
    }

    fn describe(&self) -> String {
        format!("http {}", self.url)
    }
}

struct ChildPipes {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl ChildPipes {
    fn spawn(argv: &[String]) -> std::io::Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| std::io::Error::other("empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let eof = line.is_err();
                if tx.send(line).is_err() || eof {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Drop for ChildPipes {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Line-mode child process. Requests are serialized through a mutex so
/// responses pair strictly with requests; after a timeout or broken pipe the
/// child is discarded and respawned on the next call.
pub struct SubprocessTransport {
    argv: Vec<String>,
    timeout: Duration,
    pipes: Mutex<Option<ChildPipes>>,
}

impl SubprocessTransport {
    pub fn new(argv: Vec<String>, timeout: Duration) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::Config("provider command is empty".into()));
        }
        Ok(Self {
            argv,
            timeout,
            pipes: Mutex::new(None),
        })
    }

    fn exchange(pipes: &mut ChildPipes, line: &str, timeout: Duration) -> Result<String, ProviderError> {
        let broken = |e: std::io::Error| ProviderError::Unreachable(e.to_string());
        pipes.stdin.write_all(line.as_bytes()).map_err(broken)?;
        pipes.stdin.write_all(b"\n").map_err(broken)?;
        pipes.stdin.flush().map_err(broken)?;
        match pipes.lines.recv_timeout(timeout) {
            Ok(Ok(resp)) => Ok(resp),
            Ok(Err(e)) => Err(broken(e)),
            Err(RecvTimeoutError::Timeout) => Err(ProviderError::Timeout(timeout.as_millis() as u64)),
            Err(RecvTimeoutError::Disconnected) => Err(ProviderError::Unreachable("provider closed stdout".into())),
        }
    }
}

impl Transport for SubprocessTransport {
    fn send(&self, request: &Request) -> Result<Response, ProviderError> {
        let line = serde_json::to_string(request).expect("request serializes");
        let mut guard = self.pipes.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            let spawned = ChildPipes::spawn(&self.argv)
                .map_err(|e| ProviderError::Unreachable(format!("{}: {e}", self.argv[0])))?;
            *guard = Some(spawned);
        }
        let pipes = guard.as_mut().expect("spawned above");
        match Self::exchange(pipes, &line, self.timeout) {
            Ok(resp) => {
                serde_json::from_str(&resp).map_err(|e| ProviderError::Protocol(format!("bad response line: {e}")))
            }
            Err(e) => {
                *guard = None;
                Err(e)
            }
        }
    }

    fn is_alive(&self) -> bool {
        let mut guard = self.pipes.lock().unwrap_or_else(|p| p.into_inner());
        match guard.as_mut() {
            Some(p) => matches!(p.child.try_wait(), Ok(None)),
            // not started yet; it will be spawned on demand
            None => true,
        }
    }

    fn describe(&self) -> String {
        format!("command {}", self.argv.join(" "))
    }
}

/// One recorded exchange in a replay fixture file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Request,
    pub response: Response,
}

/// Answers requests from a JSON-lines file of recorded exchanges. Requests
/// must match a recording exactly.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    name: String,
    recorded: HashMap<String, Response>,
}

impl ReplayTransport {
    pub fn from_exchanges(name: &str, exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let recorded = exchanges
            .into_iter()
            .map(|ex| (key(&ex.request), ex.response))
            .collect();
        Self {
            name: name.to_string(),
            recorded,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut exchanges = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, format!("{}: {e}", path.display())))?;
            exchanges.push(ex);
        }
        Ok(Self::from_exchanges(&path.display().to_string(), exchanges))
    }

    pub fn len(&self) -> usize {
        self.recorded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recorded.is_empty()
    }
}

fn key(request: &Request) -> String {
    serde_json::to_string(request).expect("request serializes")
}

impl Handler for ReplayTransport {
    fn handle(&self, request: &Request) -> Response {
        self.recorded
            .get(&key(request))
            .cloned()
            .unwrap_or_else(|| Response::error("no recorded response for request"))
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &Request) -> Result<Response, ProviderError> {
        Ok(self.handle(request))
    }

    fn describe(&self) -> String {
        format!("replay {}", self.name)
    }
}

/// In-process transport around a [`Handler`]; used by tests and examples.
pub struct LocalTransport<H>(pub H);

impl<H: Handler> Transport for LocalTransport<H> {
    fn send(&self, request: &Request) -> Result<Response, ProviderError> {
        Ok(self.0.handle(request))
    }

    fn describe(&self) -> String {
        "local".into()
    }
}

/// Serves a handler in line mode: one request per input line, one response
/// per output line. Unparseable lines get an `{"error": ...}` response so
/// pairing is kept.
pub fn serve_lines<H, R, W>(handler: &H, input: R, mut output: W) -> std::io::Result<()>
where
    H: Handler + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handler.handle(&req),
            Err(e) => Response::error(format!("bad request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
