//! Single boundary for all model cognition.
//!
//! Every call site builds a [`ChatRequest`] tagged with its name (for
//! example `plan.draft` or `live.decide`) and goes through
//! [`Gateway::complete`]. The backend is either a live OpenAI-compatible
//! HTTP endpoint or a deterministic script keyed by those tags. Every
//! completed call lands in an append-only audit log.

mod live;
mod script;

pub use live::LiveConfig;
pub use script::{Script, ScriptCursor, ScriptEntry};

use std::path::Path;
use std::sync::{Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One chat-completion request; `tag` names the call site.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<(Role, String)>,
    pub temperature: f64,
    pub tag: String,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// A single-user-message request at temperature 0.
    pub fn new(tag: impl Into<String>, user: impl Into<String>) -> ChatRequest {
        ChatRequest {
            messages: vec![(Role::User, user.into())],
            temperature: 0.0,
            tag: tag.into(),
            max_tokens: 1024,
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> ChatRequest {
        self.messages.insert(0, (Role::System, system.into()));
        self
    }

    /// Flattened prompt text used for hashing and script matching.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        for (role, text) in &self.messages {
            out.push_str(role.as_str());
            out.push_str(": ");
            out.push_str(text);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Scripted,
}

/// A completed call.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("ScriptExhausted: no scripted response left for tag `{0}`")]
    ScriptExhausted(String),
    #[error("AuthMissing: no api key configured and CUP_API_KEY is not set")]
    AuthMissing,
    #[error(
        "UnparseableAfterRepair: structured output failed twice; first: {first:?}, second: {second:?}"
    )]
    UnparseableAfterRepair { first: String, second: String },
    #[error("ScriptFileInvalid: {0}")]
    ScriptFileInvalid(String),
    #[error("CursorMismatch: stored script cursor does not fit the loaded script")]
    CursorMismatch,
}

/// One audit record. The JSONL sink stores a prompt hash, not the prompt;
/// the full text stays available in memory for inspection in tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
    pub tag: String,
    #[serde(skip)]
    pub prompt: String,
    pub prompt_sha256: String,
    pub response: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
}

enum Backend {
    Scripted(Mutex<script::ScriptState>),
    Live(live::LiveBackend),
}

struct AuditState {
    entries: Vec<AuditEntry>,
    sink: Option<std::fs::File>,
    bytes_written: u64,
    count_offset: u64,
}

/// Bounded counting semaphore for the in-flight request limit.
struct InFlight {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> InFlight {
        InFlight {
            permits: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn run<T>(&self, body: impl FnOnce() -> T) -> T {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
        drop(permits);
        let out = body();
        *self.permits.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

/// The model boundary. Shared by reference across all call sites; thread
/// safe, with scripted queue pops serialized and the audit log appended
/// under one lock.
pub struct Gateway {
    backend: Backend,
    audit: Mutex<AuditState>,
    tick: Mutex<Option<u64>>,
    in_flight: InFlight,
}

impl Gateway {
    pub fn scripted(script: Script) -> Gateway {
        Gateway {
            backend: Backend::Scripted(Mutex::new(script::ScriptState::new(script))),
            audit: Mutex::new(AuditState {
                entries: Vec::new(),
                sink: None,
                bytes_written: 0,
                count_offset: 0,
            }),
            tick: Mutex::new(None),
            in_flight: InFlight::new(4),
        }
    }

    pub fn live(config: LiveConfig) -> Result<Gateway, GatewayError> {
        let in_flight = InFlight::new(config.max_in_flight);
        Ok(Gateway {
            backend: Backend::Live(live::LiveBackend::new(config)?),
            audit: Mutex::new(AuditState {
                entries: Vec::new(),
                sink: None,
                bytes_written: 0,
                count_offset: 0,
            }),
            tick: Mutex::new(None),
            in_flight,
        })
    }

    pub fn backend_kind(&self) -> BackendKind {
        match self.backend {
            Backend::Scripted(_) => BackendKind::Scripted,
            Backend::Live(_) => BackendKind::Live,
        }
    }

    /// Complete one request against the configured backend and audit it.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let prompt = request.prompt_text();
        let completion = self.in_flight.run(|| match &self.backend {
            Backend::Scripted(state) => {
                let text = state.lock().unwrap().pop(&request.tag, &prompt)?;
                Ok(Completion {
                    text,
                    backend: BackendKind::Scripted,
                    latency_ms: 0,
                })
            }
            Backend::Live(backend) => backend.complete(request),
        })?;
        self.record(request, &prompt, &completion);
        Ok(completion)
    }

    /// Complete and parse as JSON; one repair round on parse failure.
    ///
    /// The repair request replays the raw output and the parse error back
    /// to the backend together with `schema_hint`.
    pub fn complete_structured<T: DeserializeOwned>(
        &self,
        request: &ChatRequest,
        schema_hint: &str,
    ) -> Result<T, GatewayError> {
        let first = self.complete(request)?;
        let first_err = match parse_json_lenient::<T>(&first.text) {
            Ok(value) => return Ok(value),
            Err(e) => e,
        };
        let mut repair = request.clone();
        repair.messages.push((Role::Assistant, first.text.clone()));
        repair.messages.push((
            Role::User,
            format!(
                "That response could not be parsed ({first_err}). \
                 Reply again with valid JSON only, matching this shape: {schema_hint}"
            ),
        ));
        let second = self.complete(&repair)?;
        parse_json_lenient::<T>(&second.text).map_err(|_| GatewayError::UnparseableAfterRepair {
            first: first.text,
            second: second.text,
        })
    }

    fn record(&self, request: &ChatRequest, prompt: &str, completion: &Completion) {
        let entry = AuditEntry {
            tick: *self.tick.lock().unwrap(),
            tag: request.tag.clone(),
            prompt: prompt.to_string(),
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            response: completion.text.clone(),
            backend: completion.backend,
            latency_ms: completion.latency_ms,
        };
        let mut audit = self.audit.lock().unwrap();
        if let Some(sink) = audit.sink.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("audit entry serializes");
            line.push('\n');
            use std::io::Write;
            sink.write_all(line.as_bytes()).expect("audit sink writable");
            audit.bytes_written += line.len() as u64;
        }
        audit.entries.push(entry);
    }

    /// Tick stamped onto subsequent audit entries (set during living).
    pub fn set_tick(&self, tick: Option<u64>) {
        *self.tick.lock().unwrap() = tick;
    }

    /// Append audit lines to `path` from now on.
    pub fn audit_to_file(&self, path: &Path, append: bool) -> std::io::Result<()> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(path)?;
        let existing = file.metadata()?.len();
        let mut audit = self.audit.lock().unwrap();
        audit.bytes_written = existing;
        audit.sink = Some(file);
        Ok(())
    }

    /// Total completed calls, including any offset restored on resume.
    pub fn call_count(&self) -> u64 {
        let audit = self.audit.lock().unwrap();
        audit.count_offset + audit.entries.len() as u64
    }

    /// Bytes written to the audit sink so far (file length).
    pub fn audit_bytes(&self) -> u64 {
        self.audit.lock().unwrap().bytes_written
    }

    /// Snapshot of the in-memory audit entries.
    pub fn audit_entries(&self) -> Vec<AuditEntry> {
        self.audit.lock().unwrap().entries.clone()
    }

    /// Scripted-queue positions, for persistence across resume.
    pub fn script_cursor(&self) -> Option<ScriptCursor> {
        match &self.backend {
            Backend::Scripted(state) => Some(state.lock().unwrap().cursor()),
            Backend::Live(_) => None,
        }
    }

    /// Restore queue positions and the call-count offset after a resume.
    pub fn restore(&self, cursor: &ScriptCursor, call_count: u64) -> Result<(), GatewayError> {
        if let Backend::Scripted(state) = &self.backend {
            state.lock().unwrap().restore(cursor)?;
        }
        self.audit.lock().unwrap().count_offset = call_count;
        Ok(())
    }
}

/// Parse JSON out of a completion, tolerating code fences and prose around
/// the first balanced object or array.
fn parse_json_lenient<T: DeserializeOwned>(text: &str) -> Result<T, serde_json::Error> {
    let trimmed = text.trim();
    let direct = serde_json::from_str::<T>(trimmed);
    if direct.is_ok() {
        return direct;
    }
    let unfenced = strip_code_fence(trimmed);
    if let Ok(value) = serde_json::from_str::<T>(unfenced) {
        return Ok(value);
    }
    if let Some(slice) = balanced_json_slice(unfenced) {
        if let Ok(value) = serde_json::from_str::<T>(slice) {
            return Ok(value);
        }
    }
    direct
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        if let Some(end) = rest.rfind("```") {
            return rest[..end].trim();
        }
    }
    t
}

fn balanced_json_slice(text: &str) -> Option<&str> {
    let open = text.find(['{', '['])?;
    let close = text.rfind(['}', ']'])?;
    (close > open).then(|| &text[open..=close])
}
