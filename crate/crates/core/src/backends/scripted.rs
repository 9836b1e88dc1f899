use std::collections::BTreeMap;
use std::sync::Mutex;

use super::{BackendError, TeacherBackend};
use crate::util::hex_digest;

/// Hex SHA-256 of `system`, a NUL byte and `user`.
pub fn fingerprint(system: &str, user: &str) -> String {
    hex_digest(&[system, user])
}

/// Replays fixed responses keyed by prompt fingerprint.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTeacher {
    fixtures: BTreeMap<String, String>,
}

impl ScriptedTeacher {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }

    /// Reads a JSON object mapping fingerprints to response text.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn insert(&mut self, system: &str, user: &str, response: impl Into<String>) {
        self.fixtures.insert(fingerprint(system, user), response.into());
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl TeacherBackend for ScriptedTeacher {
    fn identity(&self) -> String {
        format!("scripted-teacher({} fixtures)", self.fixtures.len())
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let key = fingerprint(system, user);
        self.fixtures.get(&key).cloned().ok_or(BackendError::UnknownPrompt(key))
    }
}

/// Passes calls through and remembers every response, so a live session can
/// be turned into a fixture file.
pub struct RecordingTeacher<T> {
    inner: T,
    seen: Mutex<BTreeMap<String, String>>,
}

impl<T: TeacherBackend> RecordingTeacher<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, seen: Mutex::new(BTreeMap::new()) }
    }

    pub fn fixtures_json(&self) -> String {
        let seen = self.seen.lock().expect("recording lock");
        serde_json::to_string_pretty(&*seen).expect("fixtures serialize")
    }
}

impl<T: TeacherBackend> TeacherBackend for RecordingTeacher<T> {
    fn identity(&self) -> String {
        format!("recording({})", self.inner.identity())
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let out = self.inner.generate(system, user)?;
        self.seen.lock().expect("recording lock").insert(fingerprint(system, user), out.clone());
        Ok(out)
    }
}
