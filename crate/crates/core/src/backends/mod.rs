//! Teacher and student contracts plus offline implementations.

mod external;
mod scripted;
mod simulated;
mod sim_teacher;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::adapter::SynthesisItem;

pub use external::{CommandTrainer, ExternalStudent};
pub use scripted::{fingerprint, RecordingTeacher, ScriptedTeacher};
pub use sim_teacher::{SimulatedTeacher, SimulatedTeacherConfig};
pub use simulated::{
    sim_answer, sim_train, SimMode, SimulatedStudent, SimulatedStudentState, INCORRECT_ANSWER,
};

/// Maximum epochs a single training call may run.
pub const MAX_TRAIN_EPOCHS: usize = 3;

/// System prompt used when probing either model with a seed prompt.
pub const PROBE_SYSTEM_PROMPT: &str = "Answer the task. Reply with the final answer only.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(usize),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no fixture for prompt fingerprint {0}")]
    UnknownPrompt(String),
    #[error("unknown module {0}")]
    UnknownModule(String),
    #[error("requested {0} epochs, at most 3 allowed")]
    EpochLimit(usize),
    #[error("training hook failed: {0}")]
    Hook(String),
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
}

pub trait TeacherBackend: Send + Sync {
    fn identity(&self) -> String;
    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError>;
}

impl<T: TeacherBackend + ?Sized> TeacherBackend for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        (**self).generate(system, user)
    }
}

impl<T: TeacherBackend + ?Sized> TeacherBackend for std::sync::Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        (**self).generate(system, user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub items: usize,
}

pub trait StudentBackend: Send {
    fn identity(&self) -> String;
    fn answer(&mut self, prompt: &str) -> Result<String, BackendError>;
    fn train(&mut self, items: &[SynthesisItem], max_epochs: usize) -> Result<TrainingSummary, BackendError>;
    /// Opaque snapshot of the model state, if the backend can produce one.
    fn checkpoint(&self) -> Result<Value, BackendError>;
    fn restore(&mut self, state: &Value) -> Result<(), BackendError>;
}

impl<T: StudentBackend + ?Sized> StudentBackend for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn answer(&mut self, prompt: &str) -> Result<String, BackendError> {
        (**self).answer(prompt)
    }

    fn train(&mut self, items: &[SynthesisItem], max_epochs: usize) -> Result<TrainingSummary, BackendError> {
        (**self).train(items, max_epochs)
    }

    fn checkpoint(&self) -> Result<Value, BackendError> {
        (**self).checkpoint()
    }

    fn restore(&mut self, state: &Value) -> Result<(), BackendError> {
        (**self).restore(state)
    }
}

pub(crate) fn check_epochs(max_epochs: usize) -> Result<(), BackendError> {
    if max_epochs > MAX_TRAIN_EPOCHS {
        return Err(BackendError::EpochLimit(max_epochs));
    }
    Ok(())
}
