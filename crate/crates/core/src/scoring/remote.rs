//! Client for the newline-delimited JSON scorer protocol.
//!
//! After connecting, the server writes one handshake line containing
//! [`PROTOCOL_VERSION`]. Each request is one JSON object per line:
//!
//! ```text
//! {"id":1,"image_id":"img7","prompt":"A photo of a hammer","label":"hammer","t":513,"noise_id":42}
//! ```
//!
//! and is answered, in order, by `{"id":1,"error":0.8812}` or
//! `{"id":1,"fault":"..."}`. `payload_b64` carries image bytes when the
//! image has them.
//!
//! One connection carries one request at a time: concurrent callers are
//! serialized behind a mutex, so the in-flight limit is 1.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{check_score, ScoreError, ScoreRequest, Scorer};

pub const PROTOCOL_VERSION: &str = "hdc-scorer/1";

/// Environment variable that overrides a configured remote endpoint.
pub const ENDPOINT_ENV: &str = "HDC_SCORER_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `exec:<program> [args...]`, speaking the protocol over stdin/stdout.
    Exec(Vec<String>),
}

impl Endpoint {
    pub fn parse(text: &str) -> Result<Self, ScoreError> {
        let text = text.trim();
        if let Some(addr) = text.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(ScoreError::Config("empty tcp address".into()));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = text.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(ScoreError::Config("empty exec command".into()));
            }
            return Ok(Endpoint::Exec(argv));
        }
        Err(ScoreError::Config(format!(
            "endpoint {text:?} must start with tcp:// or exec:"
        )))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    id: i64,
    image_id: &'a str,
    prompt: &'a str,
    label: &'a str,
    t: u32,
    noise_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload_b64: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    id: i64,
    #[serde(default)]
    error: Option<f64>,
    #[serde(default)]
    fault: Option<String>,
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_id: i64,
    line: String,
}

impl Connection {
    fn read_line(&mut self) -> Result<&str, ScoreError> {
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(ScoreError::Protocol("server closed the connection".into()));
        }
        Ok(self.line.trim_end())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct RemoteScorer {
    endpoint: Endpoint,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("endpoint", &self.endpoint)
            .finish()
    }
}

impl RemoteScorer {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, ScoreError> {
        let conn = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                let reader = BufReader::new(stream.try_clone()?);
                Connection {
                    reader: Box::new(reader),
                    writer: Box::new(stream),
                    child: None,
                    next_id: 1,
                    line: String::new(),
                }
            }
            Endpoint::Exec(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                    next_id: 1,
                    line: String::new(),
                }
            }
        };
        Self::handshake(endpoint.clone(), conn)
    }

    /// Wraps an already-open byte stream pair.
    pub fn from_streams(
        reader: Box<dyn BufRead + Send>,
        writer: Box<dyn Write + Send>,
    ) -> Result<Self, ScoreError> {
        let conn = Connection {
            reader,
            writer,
            child: None,
            next_id: 1,
            line: String::new(),
        };
        Self::handshake(Endpoint::Exec(vec!["<streams>".into()]), conn)
    }

    fn handshake(endpoint: Endpoint, mut conn: Connection) -> Result<Self, ScoreError> {
        let hello = conn.read_line()?;
        if !hello.contains(PROTOCOL_VERSION) {
            return Err(ScoreError::Protocol(format!(
                "expected {PROTOCOL_VERSION} handshake, got {hello:?}"
            )));
        }
        Ok(RemoteScorer {
            endpoint,
            conn: Mutex::new(conn),
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| ScoreError::Protocol("connection poisoned by an earlier panic".into()))?;
        let id = conn.next_id;
        conn.next_id += 1;
        let wire = WireRequest {
            id,
            image_id: &request.image.image_id,
            prompt: &request.prompt.rendered,
            label: &request.prompt.label,
            t: request.sample.t,
            noise_id: request.sample.noise_id,
            payload_b64: request
                .image
                .payload
                .as_ref()
                .map(|p| base64::engine::general_purpose::STANDARD.encode(p)),
        };
        let mut line = serde_json::to_string(&wire).expect("request serializes");
        line.push('\n');
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.flush()?;

        let reply = conn.read_line()?;
        let response: WireResponse = serde_json::from_str(reply)
            .map_err(|e| ScoreError::Protocol(format!("bad response {reply:?}: {e}")))?;
        if response.id != id {
            return Err(ScoreError::Protocol(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        match (response.error, response.fault) {
            (_, Some(fault)) => Err(ScoreError::Fault(fault)),
            (Some(error), None) => check_score(error),
            (None, None) => Err(ScoreError::Protocol(format!(
                "response {id} has neither error nor fault"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{render_prompt, ImageRef, ReplayRow, ReplayScorer, SamplePoint};
    use std::net::TcpListener;

    /// Minimal replay server used to exercise the client.
    fn serve(stream: TcpStream, backend: ReplayScorer) {
        let mut writer = stream.try_clone().unwrap();
        let reader = BufReader::new(stream);
        writeln!(writer, "{{\"protocol\":\"{PROTOCOL_VERSION}\"}}").unwrap();
        for line in reader.lines() {
            let line = line.unwrap();
            let reply = match serde_json::from_str::<serde_json::Value>(&line) {
                Ok(v) => {
                    let id = v["id"].as_i64().unwrap_or(-1);
                    if v["image_id"] == "bogus" {
                        // misbehaving server: wrong id
                        serde_json::json!({"id": id + 100, "error": 0.0})
                    } else {
                        match backend.get(
                            v["image_id"].as_str().unwrap_or(""),
                            v["label"].as_str().unwrap_or(""),
                            v["t"].as_u64().unwrap_or(0) as u32,
                            v["noise_id"].as_u64().unwrap_or(0),
                        ) {
                            Some(e) => serde_json::json!({"id": id, "error": e}),
                            None => serde_json::json!({"id": id, "fault": "unknown key"}),
                        }
                    }
                }
                Err(_) => serde_json::json!({"id": -1, "fault": "malformed"}),
            };
            writeln!(writer, "{reply}").unwrap();
        }
    }

    #[test]
    fn parse_endpoints() {
        assert_eq!(
            Endpoint::parse("tcp://127.0.0.1:9").unwrap(),
            Endpoint::Tcp("127.0.0.1:9".into())
        );
        assert_eq!(
            Endpoint::parse("exec:python3 bridge.py --stdio").unwrap(),
            Endpoint::Exec(vec!["python3".into(), "bridge.py".into(), "--stdio".into()])
        );
        assert!(Endpoint::parse("http://x").is_err());
        assert!(Endpoint::parse("exec:").is_err());
    }

    #[test]
    fn tcp_round_trip_and_faults() {
        let backend = ReplayScorer::from_rows(vec![ReplayRow {
            image_id: "img7".into(),
            label: "hammer".into(),
            t: 513,
            noise_id: 42,
            error: 0.8812,
        }])
        .unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            serve(stream, backend);
        });

        let scorer = RemoteScorer::connect(&Endpoint::Tcp(addr.to_string())).unwrap();
        let img = ImageRef::new("img7", None);
        let prompt = render_prompt("A photo of a {label}", "hammer").unwrap();
        let req = ScoreRequest {
            image: &img,
            prompt: &prompt,
            sample: SamplePoint { t: 513, noise_id: 42 },
        };
        assert_eq!(scorer.score(&req).unwrap(), 0.8812);

        let missing = ScoreRequest {
            sample: SamplePoint { t: 1, noise_id: 42 },
            ..req
        };
        assert!(matches!(scorer.score(&missing), Err(ScoreError::Fault(_))));
        // connection still usable after a fault
        assert_eq!(scorer.score(&req).unwrap(), 0.8812);

        let bogus = ImageRef::new("bogus", None);
        let bad = ScoreRequest { image: &bogus, ..req };
        assert!(matches!(scorer.score(&bad), Err(ScoreError::Protocol(_))));
        drop(scorer);
        server.join().unwrap();
    }

    #[test]
    fn rejects_wrong_handshake() {
        let reader: Box<dyn BufRead + Send> = Box::new(BufReader::new(&b"hello/0\n"[..]));
        let err = RemoteScorer::from_streams(reader, Box::new(std::io::sink())).unwrap_err();
        assert!(matches!(err, ScoreError::Protocol(_)));
    }

    #[test]
    fn exec_transport() {
        if Command::new("python3").arg("--version").output().is_err() {
            eprintln!("python3 unavailable, skipping");
            return;
        }
        let script = r#"import sys, json
print(json.dumps({'protocol': 'hdc-scorer/1'}), flush=True)
for line in sys.stdin:
    r = json.loads(line)
    print(json.dumps({'id': r['id'], 'error': r['t'] / 1000.0}), flush=True)
"#;
        let scorer = RemoteScorer::connect(&Endpoint::Exec(vec![
            "python3".into(),
            "-c".into(),
            script.into(),
        ]))
        .unwrap();
        let img = ImageRef::new("img", None);
        let prompt = render_prompt("A photo of a {label}", "kite").unwrap();
        for t in [1u32, 250, 1000] {
            let req = ScoreRequest {
                image: &img,
                prompt: &prompt,
                sample: SamplePoint { t, noise_id: 9 },
            };
            assert_eq!(scorer.score(&req).unwrap(), t as f64 / 1000.0);
        }
    }
}
