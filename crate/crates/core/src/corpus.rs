//! Seed corpus ingestion, per-module train/validation splitting and probe sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{KnowledgeHierarchy, ModuleId};
use crate::util::stable_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Verifiable,
    OpenEnded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("item {item} names unknown module {module}")]
    UnknownModule { item: String, module: String },
    #[error("duplicate item id {0}")]
    DuplicateItemId(String),
    #[error("verifiable item {0} has an empty reference")]
    EmptyReference(String),
    #[error("module {0} has no validation items")]
    UnprobeableModule(String),
    #[error("corpus has not been split")]
    NotSplit,
    #[error("split assignment missing for item {0}")]
    MissingAssignment(String),
    #[error("seed line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One line of a seed file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: String,
    pub module: String,
    pub prompt: String,
    pub reference: String,
    pub task_kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedItem {
    pub id: String,
    pub module_id: ModuleId,
    pub prompt: String,
    pub reference: String,
    pub task_kind: TaskKind,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCorpus {
    pub items: Vec<SeedItem>,
    pub split_seed: Option<u64>,
}

/// Validation items of one module, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub module_id: ModuleId,
    pub probes: Vec<SeedItem>,
}

/// Parses a JSON Lines seed file. Blank lines are skipped.
pub fn parse_seed_jsonl(text: &str) -> Result<Vec<SeedRecord>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn ingest(records: Vec<SeedRecord>, hierarchy: &KnowledgeHierarchy) -> Result<SeedCorpus, CorpusError> {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(records.len());
    for r in records {
        if !hierarchy.contains(&r.module) {
            return Err(CorpusError::UnknownModule {
                item: r.id,
                module: r.module,
            });
        }
        if !seen.insert(r.id.clone()) {
            return Err(CorpusError::DuplicateItemId(r.id));
        }
        if r.task_kind == TaskKind::Verifiable && r.reference.trim().is_empty() {
            return Err(CorpusError::EmptyReference(r.id));
        }
        items.push(SeedItem {
            id: r.id,
            module_id: ModuleId::new(r.module),
            prompt: r.prompt,
            reference: r.reference,
            task_kind: r.task_kind,
            split: None,
        });
    }
    let corpus = SeedCorpus {
        items,
        split_seed: None,
    };
    let seeded: BTreeSet<&str> = corpus.items.iter().map(|i| i.module_id.as_str()).collect();
    for id in hierarchy.ids() {
        if !seeded.contains(id.as_str()) {
            log::warn!("module {id} has no seed items");
        }
    }
    Ok(corpus)
}

/// Validation share for a module with `n` items: round-half-up of `n / 5`,
/// clamped to `[1, n - 1]` when `n >= 2`, and 0 for a singleton.
pub fn validation_count(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    ((2 * n + 5) / 10).clamp(1, n - 1)
}

impl SeedCorpus {
    /// Shuffles each module's items with a generator derived from `seed` and
    /// the module id, then assigns the first [`validation_count`] to validation.
    pub fn split(mut self, seed: u64) -> Self {
        let mut by_module: BTreeMap<ModuleId, Vec<usize>> = BTreeMap::new();
        for (i, item) in self.items.iter().enumerate() {
            by_module.entry(item.module_id.clone()).or_default().push(i);
        }
        for (module, mut idx) in by_module {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[
                &seed.to_be_bytes(),
                module.as_str().as_bytes(),
            ]));
            idx.shuffle(&mut rng);
            let n_val = validation_count(idx.len());
            if n_val == 0 {
                log::warn!("module {module} has a single seed item and cannot be probed");
            }
            for (rank, i) in idx.into_iter().enumerate() {
                self.items[i].split = Some(if rank < n_val {
                    Split::Validation
                } else {
                    Split::Train
                });
            }
        }
        self.split_seed = Some(seed);
        self
    }

    pub fn is_split(&self) -> bool {
        self.items.iter().all(|i| i.split.is_some())
    }

    pub fn modules(&self) -> BTreeSet<ModuleId> {
        self.items.iter().map(|i| i.module_id.clone()).collect()
    }

    pub fn items_of<'a>(&'a self, k: &'a str, split: Split) -> impl Iterator<Item = &'a SeedItem> + 'a {
        self.items
            .iter()
            .filter(move |i| i.module_id.as_str() == k && i.split == Some(split))
    }

    pub fn probes_for(&self, k: &str) -> Result<ProbeSet, CorpusError> {
        if !self.is_split() {
            return Err(CorpusError::NotSplit);
        }
        let probes: Vec<SeedItem> = self.items_of(k, Split::Validation).cloned().collect();
        if probes.is_empty() {
            return Err(CorpusError::UnprobeableModule(k.to_string()));
        }
        Ok(ProbeSet {
            module_id: ModuleId::from(k),
            probes,
        })
    }

    /// Modules that ended up with an empty validation split.
    pub fn unprobeable_modules(&self) -> BTreeSet<ModuleId> {
        self.modules()
            .into_iter()
            .filter(|m| self.items_of(m.as_str(), Split::Validation).next().is_none())
            .collect()
    }

    pub fn split_assignments(&self) -> BTreeMap<String, Split> {
        self.items
            .iter()
            .filter_map(|i| i.split.map(|s| (i.id.clone(), s)))
            .collect()
    }

    /// Restores a persisted split; every item must be covered.
    pub fn apply_assignments(
        mut self,
        assignments: &BTreeMap<String, Split>,
        seed: Option<u64>,
    ) -> Result<Self, CorpusError> {
        for item in &mut self.items {
            let s = assignments
                .get(&item.id)
                .ok_or_else(|| CorpusError::MissingAssignment(item.id.clone()))?;
            item.split = Some(*s);
        }
        self.split_seed = seed;
        Ok(self)
    }

    pub fn get(&self, id: &str) -> Option<&SeedItem> {
        self.items.iter().find(|i| i.id == id)
    }
}
