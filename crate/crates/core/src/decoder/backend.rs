//! Translation backends and the line-delimited wire protocol.
//!
//! A client writes one JSON object per line and the server answers each
//! request with one JSON object per line, in any order. Fields always appear
//! in the order shown; text is UTF-8 and never contains a raw newline (JSON
//! escapes it).
//!
//! ```text
//! request   = "{" "\"id\":" u64 ",\"text\":" string ",\"mode\":" mode
//!             ",\"k\":" u32 ",\"seed\":" u64 "}" LF
//! mode      = "\"greedy\"" | "\"beam\"" | "\"sample_topk\""
//! response  = "{" "\"id\":" u64 "," ( "\"text\":" string | "\"error\":" string ) "}" LF
//! ```
//!
//! `k` is the sampling cut-off for `sample_topk` and the beam width for
//! `beam`; greedy ignores it. A server that cannot parse a request answers
//! with `"id":null` and an error.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decode_beam, decode_greedy, decode_topk_sample, CharCodec, DecodeMode, StepModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationRequest {
    pub id: u64,
    pub text: String,
    pub mode: DecodeMode,
    pub k: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranslationResponse {
    pub id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Why one sentence could not be translated.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("protocol error on response line {line}: {msg}")]
    Protocol { line: usize, msg: String },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("no response for this id; response line {line} carried unexpected id {found}")]
    IdMismatch { line: usize, found: String },
    #[error("backend closed the connection before responding")]
    Closed,
    #[error("backend error: {0}")]
    Remote(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("cannot translate: {0}")]
    Untranslatable(String),
}

pub trait Translator: Sync {
    /// One result per request, in request order.
    fn translate_batch(&self, requests: &[TranslationRequest]) -> Vec<Result<String, TranslateError>>;

    /// Identifies the model in provenance records.
    fn model_id(&self) -> String;
}

/// Runs a [`StepModel`] in-process over character-level text.
pub struct LocalBackend<M> {
    model: M,
    codec: CharCodec,
    id: String,
}

impl<M: StepModel + Send> LocalBackend<M> {
    pub fn new(model: M, codec: CharCodec, id: impl Into<String>) -> Self {
        Self { model, codec, id: id.into() }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn codec(&self) -> &CharCodec {
        &self.codec
    }

    pub fn translate_one(&self, req: &TranslationRequest) -> Result<String, TranslateError> {
        let src = self
            .codec
            .encode(&req.text)
            .map_err(|c| TranslateError::Untranslatable(format!("character {c:?} is outside the model alphabet")))?;
        let max_len = 2 * src.len() + 8;
        let k = req.k.max(1) as usize;
        let hyp = match req.mode {
            DecodeMode::Greedy => decode_greedy(&self.model, &src, max_len),
            DecodeMode::Beam => decode_beam(&self.model, &src, k, max_len).swap_remove(0),
            DecodeMode::SampleTopk => decode_topk_sample(&self.model, &src, k, req.seed, max_len),
        };
        Ok(self.codec.decode(&hyp.tokens))
    }
}

impl<M: StepModel + Send> Translator for LocalBackend<M> {
    fn translate_batch(&self, requests: &[TranslationRequest]) -> Vec<Result<String, TranslateError>> {
        requests.par_iter().map(|r| self.translate_one(r)).collect()
    }

    fn model_id(&self) -> String {
        self.id.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientOptions {
    /// Requests written before waiting for their responses.
    pub max_in_flight: usize,
    /// How long to wait for a window of responses.
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self { max_in_flight: 64, timeout: Duration::from_secs(60) }
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    line_no: usize,
    closed: bool,
    sent: HashSet<u64>,
    child: Option<Child>,
}

/// Client side of the wire protocol, over TCP or a child process's stdio.
pub struct BackendClient {
    conn: Mutex<Connection>,
    opts: ClientOptions,
    id: String,
}

impl BackendClient {
    pub fn from_streams<R, W>(reader: R, writer: W, opts: ClientOptions, id: impl Into<String>) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::with_child(reader, writer, None, opts, id.into())
    }

    fn with_child<R, W>(reader: R, writer: W, child: Option<Child>, opts: ClientOptions, id: String) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            conn: Mutex::new(Connection {
                writer: Box::new(writer),
                lines: rx,
                line_no: 0,
                closed: false,
                sent: HashSet::new(),
                child,
            }),
            opts,
            id,
        }
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, opts: ClientOptions) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        let peer = stream.peer_addr()?.to_string();
        let reader = stream.try_clone()?;
        Ok(Self::with_child(reader, stream, None, opts, format!("tcp://{peer}")))
    }

    /// Spawns `program` and talks to it over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], opts: ClientOptions) -> io::Result<Self> {
        let mut child = Command::new(program).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let id = std::iter::once(program.to_string()).chain(args.iter().cloned()).collect::<Vec<_>>().join(" ");
        Ok(Self::with_child(stdout, stdin, Some(child), opts, format!("cmd:{id}")))
    }

    fn run_window(&self, conn: &mut Connection, window: &[TranslationRequest]) -> Vec<Result<String, TranslateError>> {
        let mut results: Vec<Option<Result<String, TranslateError>>> = vec![None; window.len()];
        let mut pending: HashMap<u64, usize> = HashMap::new();
        for (pos, req) in window.iter().enumerate() {
            if pending.insert(req.id, pos).is_some() {
                results[pos] = Some(Err(TranslateError::Transport(format!("duplicate request id {}", req.id))));
                continue;
            }
            conn.sent.insert(req.id);
            let mut line = serde_json::to_string(req).expect("plain struct");
            line.push('\n');
            if let Err(e) = conn.writer.write_all(line.as_bytes()) {
                return fail_all(results, TranslateError::Transport(e.to_string()));
            }
        }
        if let Err(e) = conn.writer.flush() {
            return fail_all(results, TranslateError::Transport(e.to_string()));
        }

        let mut stream_problem: Option<TranslateError> = None;
        let deadline = Instant::now() + self.opts.timeout;
        while !pending.is_empty() && !conn.closed {
            let wait = deadline.saturating_duration_since(Instant::now());
            match conn.lines.recv_timeout(wait) {
                Ok(Ok(line)) => {
                    conn.line_no += 1;
                    let line_no = conn.line_no;
                    match parse_response(&line) {
                        Parsed::Malformed(msg) => {
                            stream_problem.get_or_insert(TranslateError::Protocol { line: line_no, msg });
                        }
                        Parsed::Response { id, outcome } => {
                            if let Some(pos) = id.and_then(|id| pending.remove(&id)) {
                                results[pos] = Some(match outcome {
                                    Ok(Ok(text)) => Ok(text),
                                    Ok(Err(remote)) => Err(TranslateError::Remote(remote)),
                                    Err(msg) => Err(TranslateError::Protocol { line: line_no, msg }),
                                });
                            } else if id.is_some_and(|id| conn.sent.contains(&id)) {
                                log::warn!("ignoring late or repeated response for id {id:?} on line {line_no}");
                            } else {
                                stream_problem.get_or_insert(TranslateError::IdMismatch {
                                    line: line_no,
                                    found: id.map_or_else(|| "null".to_string(), |i| i.to_string()),
                                });
                            }
                        }
                    }
                }
                Ok(Err(e)) => {
                    conn.closed = true;
                    stream_problem.get_or_insert(TranslateError::Transport(e.to_string()));
                }
                Err(RecvTimeoutError::Disconnected) => conn.closed = true,
                Err(RecvTimeoutError::Timeout) => break,
            }
        }
        let fallback = stream_problem.unwrap_or(if conn.closed {
            TranslateError::Closed
        } else {
            TranslateError::Timeout(self.opts.timeout)
        });
        fail_all(results, fallback)
    }
}

fn fail_all(
    results: Vec<Option<Result<String, TranslateError>>>,
    err: TranslateError,
) -> Vec<Result<String, TranslateError>> {
    results.into_iter().map(|r| r.unwrap_or_else(|| Err(err.clone()))).collect()
}

impl Translator for BackendClient {
    fn translate_batch(&self, requests: &[TranslationRequest]) -> Vec<Result<String, TranslateError>> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = Vec::with_capacity(requests.len());
        for window in requests.chunks(self.opts.max_in_flight.max(1)) {
            out.extend(self.run_window(&mut conn, window));
        }
        out
    }

    fn model_id(&self) -> String {
        self.id.clone()
    }
}

impl Drop for BackendClient {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(child) = conn.child.as_mut() {
            // Closing stdin lets a well-behaved server exit on EOF.
            conn.writer = Box::new(io::sink());
            let give_up = Instant::now() + Duration::from_secs(2);
            while matches!(child.try_wait(), Ok(None)) && Instant::now() < give_up {
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

enum Parsed {
    Malformed(String),
    Response {
        id: Option<u64>,
        /// Outer error: the record names an id but violates the grammar.
        outcome: Result<Result<String, String>, String>,
    },
}

fn parse_response(line: &str) -> Parsed {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return Parsed::Malformed(format!("not JSON: {e}")),
    };
    let Some(obj) = value.as_object() else {
        return Parsed::Malformed("response is not an object".into());
    };
    let id = match obj.get("id") {
        Some(serde_json::Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(id) => Some(id),
            None => return Parsed::Malformed("id is not an unsigned integer".into()),
        },
        None => return Parsed::Malformed("missing id".into()),
    };
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let outcome = match (obj.get("text"), obj.get("error"), keys.len()) {
        (Some(serde_json::Value::String(t)), None, 2) => Ok(Ok(t.clone())),
        (None, Some(serde_json::Value::String(e)), 2) => Ok(Err(e.clone())),
        _ => Err(format!("expected exactly one of text/error besides id, got keys {keys:?}")),
    };
    Parsed::Response { id, outcome }
}

/// Answers requests read from `reader` until EOF.
pub fn serve_connection<R, W, F>(reader: R, mut writer: W, handler: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: Fn(&TranslationRequest) -> Result<String, String>,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<TranslationRequest>(&line) {
            Ok(req) => match handler(&req) {
                Ok(text) => TranslationResponse { id: Some(req.id), text: Some(text), error: None },
                Err(error) => TranslationResponse { id: Some(req.id), text: None, error: Some(error) },
            },
            Err(e) => TranslationResponse { id: None, text: None, error: Some(format!("bad request: {e}")) },
        };
        let mut out = serde_json::to_string(&response).expect("plain struct");
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread each.
pub fn serve_tcp<F>(listener: TcpListener, handler: F) -> io::Result<()>
where
    F: Fn(&TranslationRequest) -> Result<String, String> + Send + Sync + 'static,
{
    let handler = Arc::new(handler);
    for stream in listener.incoming() {
        let stream = stream?;
        let handler = Arc::clone(&handler);
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(r) => BufReader::new(r),
                Err(e) => {
                    log::error!("cannot clone stream: {e}");
                    return;
                }
            };
            if let Err(e) = serve_connection(reader, stream, |r| handler(r)) {
                log::warn!("connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Where translations come from, as written on the command line or in a
/// config file:
///
/// * `toy:<shift>:<noise>` runs [`ToyCipherModel::shift`] over lowercase
///   ASCII in-process,
/// * `tcp://host:port` connects to a server speaking the protocol above,
/// * `cmd:<program> [args…]` spawns a process and talks over its stdio.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Toy { shift: usize, noise: f64 },
    Tcp(String),
    Command { program: String, args: Vec<String> },
}

impl std::str::FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("toy:") {
            let (shift, noise) = rest.split_once(':').ok_or("toy backend needs toy:<shift>:<noise>")?;
            let shift = shift.parse().map_err(|_| format!("bad toy shift `{shift}`"))?;
            let noise: f64 = noise.parse().map_err(|_| format!("bad toy noise `{noise}`"))?;
            if !(0.0..1.0).contains(&noise) {
                return Err(format!("toy noise must lie in [0, 1), got {noise}"));
            }
            Ok(BackendSpec::Toy { shift, noise })
        } else if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err("tcp backend needs tcp://host:port".into());
            }
            Ok(BackendSpec::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            let mut parts = cmd.split_whitespace().map(String::from);
            let program = parts.next().ok_or("cmd backend needs a program")?;
            Ok(BackendSpec::Command { program, args: parts.collect() })
        } else {
            Err(format!("unknown backend `{s}` (expected toy:, tcp:// or cmd:)"))
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Toy { shift, noise } => write!(f, "toy:{shift}:{noise}"),
            BackendSpec::Tcp(addr) => write!(f, "tcp://{addr}"),
            BackendSpec::Command { program, args } => {
                write!(f, "cmd:{program}")?;
                args.iter().try_for_each(|a| write!(f, " {a}"))
            }
        }
    }
}

/// The toy model behind `toy:` specs: 27 symbols, EOS = 0.
pub fn toy_backend(shift: usize, noise: f64) -> LocalBackend<super::ToyCipherModel> {
    let codec = CharCodec::ascii_lowercase();
    let model = super::ToyCipherModel::shift(codec.len(), shift, noise).expect("validated noise");
    LocalBackend::new(model, codec, format!("toy:{shift}:{noise}"))
}

impl BackendSpec {
    pub fn open(&self, opts: ClientOptions) -> io::Result<Box<dyn Translator + Send>> {
        Ok(match self {
            BackendSpec::Toy { shift, noise } => Box::new(toy_backend(*shift, *noise)),
            BackendSpec::Tcp(addr) => Box::new(BackendClient::connect_tcp(addr.as_str(), opts)?),
            BackendSpec::Command { program, args } => Box::new(BackendClient::spawn(program, args, opts)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_field_order_is_fixed() {
        let r = TranslationRequest { id: 3, text: "a\nb".into(), mode: DecodeMode::SampleTopk, k: 5, seed: 9 };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"id":3,"text":"a\nb","mode":"sample_topk","k":5,"seed":9}"#);
    }

    #[test]
    fn response_grammar() {
        assert!(matches!(
            parse_response(r#"{"id":1,"text":"x"}"#),
            Parsed::Response { id: Some(1), outcome: Ok(Ok(_)) }
        ));
        assert!(matches!(
            parse_response(r#"{"id":1,"error":"boom"}"#),
            Parsed::Response { id: Some(1), outcome: Ok(Err(_)) }
        ));
        assert!(matches!(
            parse_response(r#"{"id":1,"text":"x","error":"y"}"#),
            Parsed::Response { id: Some(1), outcome: Err(_) }
        ));
        assert!(matches!(parse_response("garbage"), Parsed::Malformed(_)));
        assert!(matches!(parse_response(r#"{"text":"x"}"#), Parsed::Malformed(_)));
    }

    #[test]
    fn server_answers_bad_requests_with_null_id() {
        let input = b"{\"id\":1}\n";
        let mut out = Vec::new();
        serve_connection(&input[..], &mut out, |r| Ok(r.text.clone())).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with(r#"{"id":null,"error":"bad request"#), "{s}");
    }
}
