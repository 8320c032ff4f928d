#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use isomatrix_core::classifier::{Backend, BackendFailure, BackendKind, CompletionRequest};
use isomatrix_core::model::{Project, ProjectKind};

pub fn project(id: &str, description: &str) -> Project {
    Project {
        id: id.into(),
        title: format!("Project {id}"),
        description: description.into(),
        source: "fixture".into(),
        kind: ProjectKind::Activity,
        metadata: Default::default(),
    }
}

/// Backend that replays a script of responses (the last one repeats) and
/// counts calls and peak concurrency.
pub struct ScriptedBackend {
    script: Vec<Result<String, BackendFailure>>,
    pub calls: AtomicUsize,
    in_flight: AtomicUsize,
    pub peak: AtomicUsize,
    delay_ms: u64,
}

impl ScriptedBackend {
    pub fn new(script: Vec<Result<String, BackendFailure>>) -> Self {
        ScriptedBackend {
            script,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            delay_ms: 0,
        }
    }

    pub fn with_delay(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _request: &CompletionRequest<'_>) -> Result<String, BackendFailure> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.delay_ms > 0 {
            thread::sleep(std::time::Duration::from_millis(self.delay_ms));
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.script[n.min(self.script.len() - 1)].clone()
    }
}

/// Minimal HTTP/1.1 server answering each request with the next scripted
/// (status, body) pair. Captured request bodies are available afterwards.
pub struct FakeServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

impl FakeServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let captured = requests.clone();
        thread::spawn(move || {
            let mut n = 0;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (status, body) = responses[n.min(responses.len() - 1)].clone();
                n += 1;
                if let Some(req) = handle(stream, status, &body) {
                    captured.lock().unwrap().push(req);
                }
            }
        });
        FakeServer { url, requests }
    }
}

fn handle(stream: TcpStream, status: u16, body: &str) -> Option<(String, String)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = String::new();
    let mut content_length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        if line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        headers.push_str(&line);
    }
    let mut buf = vec![0; content_length];
    reader.read_exact(&mut buf).ok()?;
    let mut stream = stream;
    let response = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).ok()?;
    Some((headers, String::from_utf8_lossy(&buf).into_owned()))
}
