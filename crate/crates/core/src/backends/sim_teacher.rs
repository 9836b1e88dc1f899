use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, TeacherBackend};
use crate::corpus::{SeedItem, Split};
use crate::knowledge::{Difficulty, ModuleId};
use crate::util::{stable_hash, unit_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTeacherConfig {
    pub rng_seed: u64,
    /// Fraction of probes answered correctly, unless overridden per module.
    pub accuracy: f64,
    #[serde(default)]
    pub module_accuracy: BTreeMap<ModuleId, f64>,
    /// Probability that a synthesized item carries a schema or content defect.
    pub defect_rate: f64,
}

impl Default for SimulatedTeacherConfig {
    fn default() -> Self {
        Self { rng_seed: 0, accuracy: 0.95, module_accuracy: BTreeMap::new(), defect_rate: 0.1 }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "da", "ve", "zu", "ho", "pa", "mo", "ki", "le", "fi", "nu", "sa",
    "te", "bo", "ga", "ru", "wi", "je", "xo", "ya", "co", "di", "me",
];

struct Request {
    stage: String,
    units: Vec<String>,
    prereqs: HashMap<String, Vec<String>>,
    cap: Difficulty,
    count: usize,
}

struct Patterns {
    stage: Regex,
    units: Regex,
    prereqs: Regex,
    cap: Regex,
    count: Regex,
}

impl Patterns {
    fn new() -> Self {
        let re = |p: &str| Regex::new(p).expect("valid pattern");
        Self {
            stage: re(r"(?m)^Curriculum Stage: (.+)$"),
            units: re(r"(?m)^Knowledge Units: (.+)$"),
            prereqs: re(r"(?m)^Prerequisites: (.+)$"),
            cap: re(r"(?m)^Difficulty Cap: (\w+)$"),
            count: re(r"(?i)generate (\d+)"),
        }
    }

    fn parse(&self, user: &str) -> Option<Request> {
        let grab = |re: &Regex| re.captures(user).map(|c| c[1].trim().to_string());
        let units: Vec<String> = grab(&self.units)?.split(", ").map(str::to_string).collect();
        let mut prereqs = HashMap::new();
        let listed = grab(&self.prereqs).unwrap_or_else(|| "none".into());
        if listed != "none" {
            for part in listed.split("; ") {
                if let Some((k, ps)) = part.split_once(": ") {
                    let ps = if ps == "none" { vec![] } else { ps.split(", ").map(str::to_string).collect() };
                    prereqs.insert(k.to_string(), ps);
                }
            }
        }
        Some(Request {
            stage: grab(&self.stage)?,
            units,
            prereqs,
            cap: grab(&self.cap).and_then(|c| Difficulty::parse(&c)).unwrap_or(Difficulty::Introductory),
            count: grab(&self.count)?.parse().ok()?,
        })
    }
}

/// Offline teacher: answers probes at a fixed accuracy and writes
/// schema-shaped items with random content and occasional defects.
pub struct SimulatedTeacher {
    config: SimulatedTeacherConfig,
    answers: HashMap<String, (SeedItem, bool)>,
    patterns: Patterns,
}

impl SimulatedTeacher {
    pub fn new<'a>(config: SimulatedTeacherConfig, seeds: impl IntoIterator<Item = &'a SeedItem>) -> Self {
        let seed = config.rng_seed.to_be_bytes();
        let draw = |s: &SeedItem| unit_hash(&[&seed, b"teacher", s.id.as_bytes()]);
        let mut by_module: BTreeMap<ModuleId, Vec<&SeedItem>> = BTreeMap::new();
        let mut answers = HashMap::new();
        for s in seeds {
            let acc = config.module_accuracy.get(&s.module_id).copied().unwrap_or(config.accuracy);
            if s.split == Some(Split::Validation) {
                by_module.entry(s.module_id.clone()).or_default().push(s);
            } else {
                answers.insert(s.prompt.clone(), (s.clone(), draw(s) < acc));
            }
        }
        // Validation probes: exactly round(acc * n) of them are answered correctly.
        for (module, mut probes) in by_module {
            let acc = config.module_accuracy.get(&module).copied().unwrap_or(config.accuracy);
            probes.sort_by(|a, b| draw(a).total_cmp(&draw(b)).then_with(|| a.id.cmp(&b.id)));
            let correct = (acc * probes.len() as f64).round() as usize;
            for (rank, s) in probes.into_iter().enumerate() {
                answers.insert(s.prompt.clone(), (s.clone(), rank < correct));
            }
        }
        Self { config, answers, patterns: Patterns::new() }
    }

    fn word(rng: &mut ChaCha8Rng) -> String {
        (0..3).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect()
    }

    fn synthesize(&self, system: &str, user: &str, req: &Request) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[
            &self.config.rng_seed.to_be_bytes(),
            system.as_bytes(),
            user.as_bytes(),
        ]));
        let items: Vec<Value> = (0..req.count)
            .map(|i| {
                let module = &req.units[i % req.units.len()];
                let words: Vec<String> = (0..14).map(|_| Self::word(&mut rng)).collect();
                let answer = rng.gen_range(1..1000).to_string();
                let mut item = json!({
                    "module": module,
                    "prereq": req.prereqs.get(module).cloned().unwrap_or_default(),
                    "difficulty_tag": req.cap.as_str(),
                    "problem": format!("Imagine {}. Then solve: {}.", words[..4].join(" "), words[4..].join(" ")),
                    "solution": {
                        "steps": [
                            format!("Step 1: Name the parts: {}.", words[4..7].join(", ")),
                            format!("Step 2: Combine {} and {}.", words[7], words[8]),
                            format!("Step 3: The result is {answer}."),
                        ],
                        "final_answer": answer,
                        "verification": format!("Check: substituting {answer} back satisfies every condition."),
                    },
                    "adapter_flags": {
                        "concretization": true,
                        "decomposition": true,
                        "cognitive_load": {"scale": "small", "notes": "few quantities"},
                        "format_template": "Stepwise-3",
                        "simplified_language": true
                    },
                    "metadata": {"stage_id": req.stage, "seed_style_ref": null}
                });
                if rng.gen::<f64>() < self.config.defect_rate {
                    match rng.gen_range(0..5) {
                        0 => {
                            item["solution"].as_object_mut().expect("object").remove("verification");
                        }
                        1 => item["difficulty_tag"] = json!("expert"),
                        2 => item["solution"]["steps"] = json!([]),
                        3 => item["solution"]["verification"] = json!("looks fine"),
                        _ => item["module"] = json!("Unrelated/Module"),
                    }
                }
                item
            })
            .collect();
        serde_json::to_string_pretty(&items).expect("items serialize")
    }
}

impl TeacherBackend for SimulatedTeacher {
    fn identity(&self) -> String {
        format!("simulated-teacher(seed={})", self.config.rng_seed)
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        if let Some((seed, correct)) = self.answers.get(user) {
            return Ok(if *correct { seed.reference.clone() } else { super::INCORRECT_ANSWER.to_string() });
        }
        match self.patterns.parse(user) {
            Some(req) if req.count > 0 && !req.units.is_empty() => Ok(self.synthesize(system, user, &req)),
            _ => Err(BackendError::UnknownPrompt(super::fingerprint(system, user))),
        }
    }
}
