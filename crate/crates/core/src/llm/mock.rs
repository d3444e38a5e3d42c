use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, LlmError, LlmProvider};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Request hash → recorded response text. Serialized as a JSON object with
/// sorted keys so fixture files diff cleanly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureSet {
    entries: BTreeMap<String, FixtureEntry>,
}

impl FixtureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fixtures serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| LlmError::Fixture(e.to_string()))
    }

    pub fn insert(&mut self, request: &ChatRequest, response: impl Into<String>, note: Option<String>) {
        self.entries.insert(
            request.request_hash(),
            FixtureEntry {
                response: response.into(),
                note,
            },
        );
    }

    pub fn get(&self, hash: &str) -> Option<&FixtureEntry> {
        self.entries.get(hash)
    }

    pub fn merge(&mut self, other: FixtureSet) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replays fixture responses; unknown requests fail with `FixtureMiss`.
#[derive(Debug, Default)]
pub struct MockProvider {
    fixtures: FixtureSet,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(fixtures: FixtureSet) -> Self {
        Self {
            fixtures,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        FixtureSet::load(path).map(Self::new)
    }

    /// Number of `complete` calls served so far, hits and misses alike.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmProvider for MockProvider {
    fn id(&self) -> String {
        "mock".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = request.request_hash();
        self.fixtures
            .get(&hash)
            .map(|e| ChatResponse::stop(e.response.clone()))
            .ok_or(LlmError::FixtureMiss(hash))
    }
}

/// Provider backed by a closure. Used for scripted and adversarial test
/// doubles and for generating fixture files.
pub struct FnProvider<F> {
    id: String,
    f: F,
    calls: AtomicUsize,
}

impl<F> FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self {
            id: id.into(),
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> LlmProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request).map(ChatResponse::stop)
    }
}

/// Wraps a provider and appends every successful exchange to a fixture file.
pub struct RecordingProvider<P> {
    inner: P,
    path: Option<PathBuf>,
    recorded: Mutex<FixtureSet>,
}

impl<P: LlmProvider> RecordingProvider<P> {
    /// Starts from the fixtures already in `path`, if the file exists.
    pub fn new(inner: P, path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let existing = if path.exists() {
            FixtureSet::load(&path)?
        } else {
            FixtureSet::new()
        };
        Ok(Self {
            inner,
            path: Some(path),
            recorded: Mutex::new(existing),
        })
    }

    /// Records in memory only; retrieve with [`RecordingProvider::fixtures`].
    pub fn in_memory(inner: P) -> Self {
        Self {
            inner,
            path: None,
            recorded: Mutex::new(FixtureSet::new()),
        }
    }

    pub fn fixtures(&self) -> FixtureSet {
        self.recorded.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        let mut set = self.recorded.lock().unwrap_or_else(|e| e.into_inner());
        let note = request
            .last_user_message()
            .map(|m| m.lines().find(|l| !l.trim().is_empty()).unwrap_or("").chars().take(80).collect());
        set.insert(request, response.text.clone(), note);
        if let Some(path) = &self.path {
            set.save(path)?;
        }
        Ok(response)
    }
}
