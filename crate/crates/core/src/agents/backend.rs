//! Response backends: the scripted mock used for desk-scale runs and the
//! remote HTTP backend.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the HTTP backend URL.
pub const BACKEND_URL_ENV: &str = "SMAGDI_BACKEND_URL";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("no scripted response for {0}")]
    Unscripted(String),
    #[error("malformed backend reply: {0}")]
    Protocol(String),
    #[error("mock script error: {0}")]
    Script(String),
}

impl BackendError {
    /// Whether a caller may retry the same request.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Timeout(_) | BackendError::Transport(_))
    }
}

/// What a request is for. Backends that replay scripts key on this; remote
/// backends ignore it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestTag {
    Agent { question_id: String, agent_id: String, round: u32 },
    Decompose { question_id: String },
    Solve { question_id: String },
}

impl std::fmt::Display for RequestTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestTag::Agent { question_id, agent_id, round } => {
                write!(f, "{question_id}/{agent_id}/round {round}")
            }
            RequestTag::Decompose { question_id } => write!(f, "{question_id}/decompose"),
            RequestTag::Solve { question_id } => write!(f, "{question_id}/solve"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub tag: Option<RequestTag>,
}

/// Anything that can turn a prompt into text. Must tolerate concurrent calls.
pub trait AgentBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

impl<B: AgentBackend + ?Sized> AgentBackend for &B {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

impl<B: AgentBackend + ?Sized> AgentBackend for Box<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

/// One scripted agent utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub question_id: String,
    pub agent_id: String,
    pub round: u32,
    pub text: String,
}

/// On-disk shape of a mock script.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub responses: Vec<ScriptedResponse>,
    /// Decomposer synthesis output per question id.
    #[serde(default)]
    pub decompositions: std::collections::BTreeMap<String, String>,
    /// Solver synthesis output per question id.
    #[serde(default)]
    pub solutions: std::collections::BTreeMap<String, String>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| BackendError::Script(e.to_string()))?;
        fs::write(path, text).map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))
    }
}

/// Replays a [`MockScript`]. A pure function of the request tag.
///
/// Agent lookups fall back to the latest scripted round at or below the
/// requested one, so an agent scripted only for round 1 keeps its position.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    agent: HashMap<(String, String), Vec<(u32, String)>>,
    decompositions: HashMap<String, String>,
    solutions: HashMap<String, String>,
    failures: Vec<RequestTag>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let mut agent: HashMap<(String, String), Vec<(u32, String)>> = HashMap::new();
        for r in script.responses {
            agent
                .entry((r.question_id, r.agent_id))
                .or_default()
                .push((r.round, r.text));
        }
        for rounds in agent.values_mut() {
            rounds.sort_by_key(|(round, _)| *round);
        }
        MockBackend {
            agent,
            decompositions: script.decompositions.into_iter().collect(),
            solutions: script.solutions.into_iter().collect(),
            failures: Vec::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(MockScript::load(path)?))
    }

    /// Makes requests with this tag fail with a timeout.
    pub fn fail_on(mut self, tag: RequestTag) -> Self {
        self.failures.push(tag);
        self
    }

    pub fn script_agent(&mut self, question_id: &str, agent_id: &str, round: u32, text: &str) {
        let rounds = self
            .agent
            .entry((question_id.to_string(), agent_id.to_string()))
            .or_default();
        rounds.retain(|(r, _)| *r != round);
        rounds.push((round, text.to_string()));
        rounds.sort_by_key(|(r, _)| *r);
    }
}

impl AgentBackend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let tag = request
            .tag
            .as_ref()
            .ok_or_else(|| BackendError::Unscripted("untagged request".into()))?;
        if self.failures.contains(tag) {
            return Err(BackendError::Timeout(tag.to_string()));
        }
        let found = match tag {
            RequestTag::Agent { question_id, agent_id, round } => self
                .agent
                .get(&(question_id.clone(), agent_id.clone()))
                .and_then(|rounds| rounds.iter().rev().find(|(r, _)| r <= round))
                .map(|(_, text)| text.clone()),
            RequestTag::Decompose { question_id } => self.decompositions.get(question_id).cloned(),
            RequestTag::Solve { question_id } => self.solutions.get(question_id).cloned(),
        };
        found.ok_or_else(|| BackendError::Unscripted(tag.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    pub url: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl HttpBackendConfig {
    pub fn from_env() -> Option<Self> {
        std::env::var(BACKEND_URL_ENV).ok().map(|url| HttpBackendConfig {
            url,
            timeout: Duration::from_secs(60),
            retries: 2,
        })
    }
}

#[derive(Serialize)]
struct HttpRequestBody<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct HttpReplyBody {
    text: String,
}

/// POSTs `{prompt, temperature, max_tokens}` and expects `{text}` back.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        HttpBackend { config, agent }
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = HttpRequestBody {
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut response = self
            .agent
            .post(&self.config.url)
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout(e.to_string()),
                ureq::Error::StatusCode(code) if code < 500 => {
                    BackendError::Protocol(format!("status {code}"))
                }
                other => BackendError::Transport(other.to_string()),
            })?;
        let reply: HttpReplyBody = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(reply.text)
    }
}

impl AgentBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut last = None;
        for _ in 0..=self.config.retries {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() => {
                    log::warn!("http backend attempt failed: {e}");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn tag(q: &str, a: &str, r: u32) -> Option<RequestTag> {
        Some(RequestTag::Agent { question_id: q.into(), agent_id: a.into(), round: r })
    }

    fn request(t: Option<RequestTag>) -> GenerationRequest {
        GenerationRequest { prompt: "p".into(), temperature: 0.7, max_tokens: 16, tag: t }
    }

    #[test]
    fn mock_falls_back_to_latest_earlier_round() {
        let mut mock = MockBackend::default();
        mock.script_agent("q", "Lawyer", 1, "Answer: True");
        mock.script_agent("q", "Lawyer", 3, "Answer: False");
        assert_eq!(mock.generate(&request(tag("q", "Lawyer", 2))).unwrap(), "Answer: True");
        assert_eq!(mock.generate(&request(tag("q", "Lawyer", 3))).unwrap(), "Answer: False");
        assert!(matches!(
            mock.generate(&request(tag("q", "Scientist", 1))),
            Err(BackendError::Unscripted(_))
        ));
    }

    #[test]
    fn scripted_failure_is_retryable() {
        let mock = MockBackend::default().fail_on(tag("q", "Lawyer", 1).unwrap());
        let err = mock.generate(&request(tag("q", "Lawyer", 1))).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        let mut script = MockScript::default();
        script.responses.push(ScriptedResponse {
            question_id: "q".into(),
            agent_id: "Ethicist".into(),
            round: 1,
            text: "Answer: False".into(),
        });
        script.decompositions.insert("q".into(), "1. a?".into());
        script.save(&path).unwrap();
        let mock = MockBackend::from_file(&path).unwrap();
        assert_eq!(mock.generate(&request(tag("q", "Ethicist", 1))).unwrap(), "Answer: False");
        let d = RequestTag::Decompose { question_id: "q".into() };
        assert_eq!(mock.generate(&request(Some(d))).unwrap(), "1. a?");
    }

    /// Serves `fail_first` 503 responses, then echoes the prompt length.
    fn serve(fail_first: usize) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = if n < fail_first {
                    ("503 Service Unavailable", String::from("{}"))
                } else {
                    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    let text = format!(
                        "len={} t={} Answer: True",
                        v["prompt"].as_str().unwrap().len(),
                        v["temperature"]
                    );
                    ("200 OK", serde_json::json!({ "text": text }).to_string())
                };
                let head = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                stream.write_all(head.as_bytes()).unwrap();
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, hits)
    }

    #[test]
    fn http_backend_posts_json_and_reads_text() {
        let (url, _) = serve(0);
        let backend = HttpBackend::new(HttpBackendConfig {
            url,
            timeout: Duration::from_secs(5),
            retries: 0,
        });
        let mut req = request(None);
        req.prompt = "hello".into();
        assert_eq!(backend.generate(&req).unwrap(), "len=5 t=0.7 Answer: True");
    }

    #[test]
    fn http_backend_retries_server_errors() {
        let (url, hits) = serve(2);
        let backend = HttpBackend::new(HttpBackendConfig {
            url,
            timeout: Duration::from_secs(5),
            retries: 2,
        });
        assert!(backend.generate(&request(None)).is_ok());
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn http_backend_gives_up_after_retries() {
        let (url, hits) = serve(10);
        let backend = HttpBackend::new(HttpBackendConfig {
            url,
            timeout: Duration::from_secs(5),
            retries: 1,
        });
        let err = backend.generate(&request(None)).unwrap_err();
        assert!(err.is_retryable());
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }
}
