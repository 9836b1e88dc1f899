use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

use super::{check_epochs, BackendError, StudentBackend, TeacherBackend, TrainingSummary, PROBE_SYSTEM_PROMPT};
use crate::adapter::SynthesisItem;

/// Runs `<program> [args..] <items_path> <max_epochs>` to fine-tune a model.
#[derive(Debug, Clone)]
pub struct CommandTrainer {
    pub program: String,
    pub args: Vec<String>,
    /// Directory the item files are written to.
    pub work_dir: PathBuf,
}

impl CommandTrainer {
    /// Splits a command line on whitespace; the first token is the program.
    pub fn parse(command: &str, work_dir: impl Into<PathBuf>) -> Option<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        Some(Self { program: parts.next()?, args: parts.collect(), work_dir: work_dir.into() })
    }

    pub fn run(&self, items: &[SynthesisItem], max_epochs: usize, call: usize) -> Result<(), BackendError> {
        std::fs::create_dir_all(&self.work_dir).map_err(|e| BackendError::Hook(e.to_string()))?;
        let path = self.work_dir.join(format!("train-{call:05}.json"));
        let body = serde_json::to_string_pretty(items).expect("items serialize");
        std::fs::write(&path, body).map_err(|e| BackendError::Hook(e.to_string()))?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .arg(max_epochs.to_string())
            .status()
            .map_err(|e| BackendError::Hook(format!("{}: {e}", self.program)))?;
        if !status.success() {
            return Err(BackendError::Hook(format!("{} exited with {status}", self.program)));
        }
        Ok(())
    }
}

/// A real student: answers through a chat endpoint and trains through a hook.
pub struct ExternalStudent {
    chat: Box<dyn TeacherBackend>,
    trainer: CommandTrainer,
    calls: usize,
}

impl ExternalStudent {
    pub fn new(chat: Box<dyn TeacherBackend>, trainer: CommandTrainer) -> Self {
        Self { chat, trainer, calls: 0 }
    }
}

impl StudentBackend for ExternalStudent {
    fn identity(&self) -> String {
        format!("external-student({})", self.chat.identity())
    }

    fn answer(&mut self, prompt: &str) -> Result<String, BackendError> {
        self.chat.generate(PROBE_SYSTEM_PROMPT, prompt)
    }

    fn train(&mut self, items: &[SynthesisItem], max_epochs: usize) -> Result<TrainingSummary, BackendError> {
        check_epochs(max_epochs)?;
        self.calls += 1;
        self.trainer.run(items, max_epochs, self.calls)?;
        Ok(TrainingSummary { epochs: max_epochs, items: items.len() * max_epochs })
    }

    fn checkpoint(&self) -> Result<Value, BackendError> {
        Err(BackendError::Unsupported("checkpoint"))
    }

    fn restore(&mut self, _state: &Value) -> Result<(), BackendError> {
        Err(BackendError::Unsupported("restore"))
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::backends::ScriptedTeacher;

    #[test]
    fn hook_receives_file_and_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.txt");
        // `sh -c '<cmd>' <path> <epochs>` binds $0/$1 to the appended args
        let trainer = CommandTrainer {
            program: "sh".into(),
            args: vec!["-c".into(), format!("echo \"$0 $1\" >> {}", log.display())],
            work_dir: dir.path().join("items"),
        };
        let mut teacher = ScriptedTeacher::default();
        teacher.insert(PROBE_SYSTEM_PROMPT, "2+2", "4");
        let mut s = ExternalStudent::new(Box::new(teacher), trainer);
        assert_eq!(s.answer("2+2").unwrap(), "4");
        s.train(&[], 2).unwrap();
        let logged = std::fs::read_to_string(&log).unwrap();
        assert!(logged.trim().ends_with("train-00001.json 2"));
        assert!(matches!(s.checkpoint(), Err(BackendError::Unsupported(_))));

        let failing = CommandTrainer { program: "false".into(), args: vec![], work_dir: dir.path().into() };
        let mut s = ExternalStudent::new(Box::new(ScriptedTeacher::default()), failing);
        assert!(matches!(s.train(&[], 1), Err(BackendError::Hook(_))));
    }
}
