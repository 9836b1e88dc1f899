//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pedagogy_core::corpus::{ingest, SeedCorpus, SeedRecord, TaskKind};
use pedagogy_core::knowledge::{Difficulty, KnowledgeHierarchy, KnowledgeModule, ModuleId};
use pedagogy_core::pipeline::{RunConfig, SimulatedStudentSettings, StudentSelection, TeacherSelection};
use pedagogy_core::backends::SimulatedTeacherConfig;

pub fn hierarchy(ids: &[&str]) -> KnowledgeHierarchy {
    let modules = ids
        .iter()
        .map(|id| {
            let cat = id.split('/').next().unwrap();
            KnowledgeModule::new(*id, cat, id.replace('/', " "), Difficulty::Introductory).unwrap()
        })
        .collect();
    KnowledgeHierarchy::new("toy", modules).unwrap()
}

/// `per_module` verifiable items per module, split with `seed`.
pub fn corpus(h: &KnowledgeHierarchy, per_module: usize, seed: u64) -> SeedCorpus {
    let records = h
        .ids()
        .flat_map(|k| {
            (0..per_module).map(move |i| SeedRecord {
                id: format!("{k}#{i}"),
                module: k.to_string(),
                prompt: format!("Solve exercise {i} on {k}."),
                reference: format!("{i}-{}", k.as_str().len() + i),
                task_kind: TaskKind::Verifiable,
            })
        })
        .collect();
    ingest(records, h).unwrap().split(seed)
}

pub fn id(s: &str) -> ModuleId {
    ModuleId::new(s)
}

pub fn prereqs(edges: &[(&str, &str)]) -> BTreeMap<ModuleId, BTreeSet<ModuleId>> {
    let mut out: BTreeMap<ModuleId, BTreeSet<ModuleId>> = BTreeMap::new();
    for (from, to) in edges {
        out.entry(id(to)).or_default().insert(id(from));
    }
    out
}

/// The three-module chain a -> b -> c with every module targeted.
pub fn chain3(mastery: &[(&str, f64)]) -> (RunConfig, KnowledgeHierarchy, SeedCorpus) {
    let h = hierarchy(&["m/a", "m/b", "m/c"]);
    let c = corpus(&h, 50, 7);
    let config = RunConfig {
        target_fraction: 1.0,
        rng_seed: 7,
        teacher: TeacherSelection::Simulated(SimulatedTeacherConfig { rng_seed: 7, ..Default::default() }),
        student: StudentSelection::Simulated(SimulatedStudentSettings {
            mastery: mastery.iter().map(|(k, m)| (id(k), *m)).collect(),
            planted_prereqs: prereqs(&[("m/a", "m/b"), ("m/b", "m/c")]),
            ..Default::default()
        }),
        ..Default::default()
    };
    (config, h, c)
}
