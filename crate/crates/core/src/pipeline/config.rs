use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backends::{
    ScriptedTeacher, SimMode, SimulatedStudent, SimulatedStudentState, SimulatedTeacher, SimulatedTeacherConfig,
    TeacherBackend,
};
use crate::corpus::SeedCorpus;
use crate::identifier::{DependencyMode, DependencyParams};
use crate::knowledge::ModuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotCadence {
    #[default]
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StallPolicy {
    #[default]
    ProceedWithWarning,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherSelection {
    Simulated(SimulatedTeacherConfig),
    Scripted { fixtures: PathBuf },
    Http(HttpSettings),
}

impl Default for TeacherSelection {
    fn default() -> Self {
        Self::Simulated(SimulatedTeacherConfig::default())
    }
}

impl TeacherSelection {
    /// Builds the in-process teachers. Returns `None` for `Http`, which lives
    /// in a separate crate.
    pub fn build_local(&self, corpus: &SeedCorpus) -> Result<Option<Box<dyn TeacherBackend>>, PipelineError> {
        Ok(match self {
            Self::Simulated(cfg) => Some(Box::new(SimulatedTeacher::new(cfg.clone(), &corpus.items))),
            Self::Scripted { fixtures } => {
                let text = std::fs::read_to_string(fixtures).map_err(|e| PipelineError::io(fixtures, e))?;
                let teacher = ScriptedTeacher::from_json(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", fixtures.display())))?;
                Some(Box::new(teacher))
            }
            Self::Http(_) => None,
        })
    }
}

/// Chat endpoint settings. The credential itself is only ever read from the
/// environment variable named here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub parallelism: usize,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: String::new(),
            api_key_env: "TEACHER_API_KEY".into(),
            timeout_secs: 120,
            max_retries: 4,
            parallelism: 4,
            temperature: None,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatedStudentSettings {
    /// Starting mastery for modules not listed in `mastery`.
    pub initial_mastery: f64,
    pub mastery: BTreeMap<ModuleId, f64>,
    pub planted_prereqs: BTreeMap<ModuleId, BTreeSet<ModuleId>>,
    pub learning_rate: f64,
    pub readiness_floor: f64,
    pub mode: SimMode,
}

impl Default for SimulatedStudentSettings {
    fn default() -> Self {
        Self {
            initial_mastery: 0.1,
            mastery: BTreeMap::new(),
            planted_prereqs: BTreeMap::new(),
            learning_rate: 0.1,
            readiness_floor: 0.05,
            mode: SimMode::Deterministic,
        }
    }
}

impl SimulatedStudentSettings {
    pub fn state<'a>(&self, modules: impl IntoIterator<Item = &'a ModuleId>, rng_seed: u64) -> SimulatedStudentState {
        let mastery = modules
            .into_iter()
            .map(|k| (k.clone(), self.mastery.get(k).copied().unwrap_or(self.initial_mastery)))
            .collect();
        SimulatedStudentState {
            planted_prereqs: self.planted_prereqs.clone(),
            readiness_floor: self.readiness_floor,
            mode: self.mode,
            ..SimulatedStudentState::new(mastery, self.learning_rate, rng_seed)
        }
    }

    /// A student over every module of `corpus`.
    pub fn build(&self, corpus: &SeedCorpus, rng_seed: u64) -> SimulatedStudent {
        SimulatedStudent::new(self.state(&corpus.modules(), rng_seed), &corpus.items)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudentSelection {
    Simulated(SimulatedStudentSettings),
    External {
        /// Chat endpoint serving the student model.
        chat: HttpSettings,
        /// Training hook; receives the item file path and the epoch budget.
        train_command: String,
    },
}

impl Default for StudentSelection {
    fn default() -> Self {
        Self::Simulated(SimulatedStudentSettings::default())
    }
}

/// Every threshold and budget of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tau_gap: f64,
    pub tau_high: f64,
    pub tau_low: f64,
    pub tau_dep: f64,
    pub alpha: f64,
    pub tau_zpd: f64,
    pub tau_mastery: f64,
    pub epsilon: f64,
    pub target_fraction: f64,
    pub items_per_seed: usize,
    pub max_epochs_per_stage: usize,
    pub max_remedial_rounds: usize,
    /// Items requested per remedial round; defaults to items_per_seed times the failing count.
    pub remedial_items: Option<usize>,
    /// Items requested for a bridging batch; defaults to items_per_seed times the stage size.
    pub bridging_items: Option<usize>,
    pub bridging: bool,
    pub rng_seed: u64,
    pub snapshot_cadence: SnapshotCadence,
    pub stall_policy: StallPolicy,
    pub dependency_mode: DependencyMode,
    pub calibration_max_epochs: usize,
    pub calibration_items_per_epoch: usize,
    pub calibration_exposure_epochs: usize,
    /// Precomputed dependency graph; skips calibration when set.
    pub graph_file: Option<PathBuf>,
    pub size_cap: String,
    /// Complexity cap text; defaults to the stage's difficulty cap.
    pub complexity_cap: Option<String>,
    pub lenient_difficulty: bool,
    /// Append the seed item to its stage prompt as a style reference.
    pub seed_context: bool,
    pub teacher_parallelism: usize,
    pub teacher: TeacherSelection,
    pub student: StudentSelection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau_gap: 0.3,
            tau_high: 0.9,
            tau_low: 0.7,
            tau_dep: 0.3,
            alpha: 0.7,
            tau_zpd: 0.15,
            tau_mastery: 0.9,
            epsilon: 0.01,
            target_fraction: 0.25,
            items_per_seed: 10,
            max_epochs_per_stage: 3,
            max_remedial_rounds: 3,
            remedial_items: None,
            bridging_items: None,
            bridging: true,
            rng_seed: 0,
            snapshot_cadence: SnapshotCadence::PerEpoch,
            stall_policy: StallPolicy::ProceedWithWarning,
            dependency_mode: DependencyMode::FirstCrossing,
            calibration_max_epochs: 10,
            calibration_items_per_epoch: 8,
            calibration_exposure_epochs: 1,
            graph_file: None,
            size_cap: "small".into(),
            complexity_cap: None,
            lenient_difficulty: false,
            seed_context: true,
            teacher_parallelism: 4,
            teacher: TeacherSelection::default(),
            student: StudentSelection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = [
            ("tau_gap", self.tau_gap),
            ("tau_high", self.tau_high),
            ("tau_low", self.tau_low),
            ("tau_dep", self.tau_dep),
            ("alpha", self.alpha),
            ("tau_zpd", self.tau_zpd),
            ("tau_mastery", self.tau_mastery),
            ("epsilon", self.epsilon),
            ("target_fraction", self.target_fraction),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(PipelineError::Config(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        if self.tau_low > self.tau_high {
            return Err(PipelineError::Config("tau_low must not exceed tau_high".into()));
        }
        let counts = [
            ("items_per_seed", self.items_per_seed),
            ("max_epochs_per_stage", self.max_epochs_per_stage),
            ("teacher_parallelism", self.teacher_parallelism),
            ("calibration_max_epochs", self.calibration_max_epochs),
            ("calibration_items_per_epoch", self.calibration_items_per_epoch),
            ("calibration_exposure_epochs", self.calibration_exposure_epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.max_epochs_per_stage > crate::backends::MAX_TRAIN_EPOCHS {
            return Err(PipelineError::Config("max_epochs_per_stage must be at most 3".into()));
        }
        if self.calibration_exposure_epochs > crate::backends::MAX_TRAIN_EPOCHS {
            return Err(PipelineError::Config("calibration_exposure_epochs must be at most 3".into()));
        }
        for (name, v) in [("remedial_items", self.remedial_items), ("bridging_items", self.bridging_items)] {
            if v == Some(0) {
                return Err(PipelineError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dependency_params(&self) -> DependencyParams<f64> {
        DependencyParams {
            tau_high: self.tau_high,
            tau_low: self.tau_low,
            epsilon: self.epsilon,
            mode: self.dependency_mode,
        }
    }
}
