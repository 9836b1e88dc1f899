//! Knowledge hierarchy and the module dependency graph.
//!
//! A hierarchy is the teacher-produced decomposition of a domain into
//! `category/module` units. The dependency graph carries weighted
//! prerequisite edges between those units and provides the cycle breaking,
//! prerequisite lookup and topological leveling used by the planner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scalar::Scalar;

/// Hierarchical identifier of a knowledge module.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleId(String);

impl ModuleId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Text before the first `/`, or the whole id when there is none.
    pub fn category(&self) -> &str {
        self.0.split('/').next().unwrap_or(&self.0)
    }

    /// True when the id has the strict `category/name` form.
    pub fn is_well_formed(&self) -> bool {
        let mut parts = self.0.split('/');
        matches!(
            (parts.next(), parts.next(), parts.next()),
            (Some(c), Some(n), None) if !c.trim().is_empty() && !n.trim().is_empty()
        )
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModuleId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for ModuleId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl std::borrow::Borrow<str> for ModuleId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Difficulty level of a module or a synthesized item. Ordered from easiest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Introductory,
    Intermediate,
    Advanced,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Self::Introductory, Self::Intermediate, Self::Advanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Introductory => "introductory",
            Self::Intermediate => "intermediate",
            Self::Advanced => "advanced",
        }
    }

    /// Strict parse of the canonical lowercase names.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    /// Like [`Difficulty::parse`] but also maps the misspelling `interdiate`.
    pub fn parse_lenient(s: &str) -> Option<Self> {
        match s {
            "interdiate" => Some(Self::Intermediate),
            other => Self::parse(other),
        }
    }

    /// The next level up, saturating at `Advanced`.
    pub fn one_notch_up(self) -> Self {
        match self {
            Self::Introductory => Self::Intermediate,
            _ => Self::Advanced,
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("duplicate module id {0}")]
    DuplicateId(String),
    #[error("unknown module {0}")]
    UnknownModule(String),
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("dependency graph contains a cycle")]
    CyclicGraph,
}

/// One fine-grained unit of the domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeModule {
    pub id: ModuleId,
    pub category: String,
    pub name: String,
    #[serde(rename = "difficulty")]
    pub difficulty_level: Difficulty,
}

impl KnowledgeModule {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        name: impl Into<String>,
        difficulty_level: Difficulty,
    ) -> Result<Self, KnowledgeError> {
        let id = ModuleId::new(id);
        if !id.is_well_formed() {
            return Err(KnowledgeError::SchemaViolation(format!(
                "id {:?} is not of the form category/module",
                id.as_str()
            )));
        }
        Ok(Self {
            id,
            category: category.into(),
            name: name.into(),
            difficulty_level,
        })
    }
}

/// Lower and upper bounds on the module count asked of the teacher.
pub const TARGET_MODULE_RANGE: (usize, usize) = (25, 35);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeHierarchy {
    pub domain: String,
    pub modules: Vec<KnowledgeModule>,
}

impl KnowledgeHierarchy {
    pub fn new(
        domain: impl Into<String>,
        modules: Vec<KnowledgeModule>,
    ) -> Result<Self, KnowledgeError> {
        if modules.is_empty() {
            return Err(KnowledgeError::MalformedResponse(
                "hierarchy needs at least one module".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for m in &modules {
            if !m.id.is_well_formed() {
                return Err(KnowledgeError::SchemaViolation(format!(
                    "id {:?} is not of the form category/module",
                    m.id.as_str()
                )));
            }
            if !seen.insert(m.id.clone()) {
                return Err(KnowledgeError::DuplicateId(m.id.to_string()));
            }
        }
        let hierarchy = Self {
            domain: domain.into(),
            modules,
        };
        if !hierarchy.has_target_size() {
            log::warn!(
                "hierarchy has {} modules, outside the requested {}-{}",
                hierarchy.modules.len(),
                TARGET_MODULE_RANGE.0,
                TARGET_MODULE_RANGE.1
            );
        }
        Ok(hierarchy)
    }

    pub fn has_target_size(&self) -> bool {
        (TARGET_MODULE_RANGE.0..=TARGET_MODULE_RANGE.1).contains(&self.modules.len())
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeModule> {
        self.modules.iter().find(|m| m.id.as_str() == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ModuleId> {
        self.modules.iter().map(|m| &m.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hierarchy serializes")
    }

    /// Accepts either the object form written by [`Self::to_json`] or a bare
    /// module array (in which case `domain` fills the name).
    pub fn from_json(text: &str, domain: &str) -> Result<Self, KnowledgeError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| KnowledgeError::MalformedResponse(e.to_string()))?;
        match value {
            Value::Array(records) => Self::new(domain, modules_from_records(&records)?),
            Value::Object(ref map) => {
                let name = map
                    .get("domain")
                    .and_then(Value::as_str)
                    .unwrap_or(domain)
                    .to_string();
                let records = map.get("modules").and_then(Value::as_array).ok_or_else(|| {
                    KnowledgeError::MalformedResponse("missing modules array".into())
                })?;
                Self::new(name, modules_from_records(records)?)
            }
            _ => Err(KnowledgeError::MalformedResponse(
                "expected an array or object".into(),
            )),
        }
    }
}

/// Renders the hierarchy decomposition request sent to the teacher.
pub fn hierarchy_prompt(domain: &str, description: &str) -> String {
    format!(
        "Break the learning domain below into small knowledge modules grouped by category.\n\n\
Domain: {domain}\n\n\
Description: {description}\n\n\
Produce between {lo} and {hi} modules. The description is a hint, so add categories it does not name if the domain needs them. \
Give every module these fields:\n\
- id: unique, written as \"category/module\"\n\
- category: the category name\n\
- name: a short readable module name\n\
- difficulty: introductory, intermediate or advanced\n\n\
Answer with a JSON array only, shaped like this:\n\
[\n  \
{{\"id\": \"geometry/triangle_area\", \"category\": \"Geometry\", \"name\": \"Area of Triangles\", \"difficulty\": \"introductory\"}},\n  \
{{\"id\": \"geometry/similar_triangles\", \"category\": \"Geometry\", \"name\": \"Similar Triangles\", \"difficulty\": \"intermediate\"}}\n\
]\n",
        lo = TARGET_MODULE_RANGE.0,
        hi = TARGET_MODULE_RANGE.1,
    )
}

/// Extracts and validates the module array from a raw teacher response.
///
/// The response may wrap the array in prose or code fences; the first
/// position that parses as a JSON array of objects is used.
pub fn parse_hierarchy(raw_text: &str, domain: &str) -> Result<KnowledgeHierarchy, KnowledgeError> {
    let records = first_object_array(raw_text).ok_or_else(|| {
        KnowledgeError::MalformedResponse("no JSON array of records found".into())
    })?;
    if records.is_empty() {
        return Err(KnowledgeError::MalformedResponse(
            "module array is empty".into(),
        ));
    }
    KnowledgeHierarchy::new(domain, modules_from_records(&records)?)
}

/// First JSON array in `text` whose elements are all objects.
pub(crate) fn first_object_array(text: &str) -> Option<Vec<Value>> {
    for (pos, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.iter().all(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

fn modules_from_records(records: &[Value]) -> Result<Vec<KnowledgeModule>, KnowledgeError> {
    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let field = |key: &str| -> Result<&str, KnowledgeError> {
                record.get(key).and_then(Value::as_str).ok_or_else(|| {
                    KnowledgeError::SchemaViolation(format!("record {i}: missing string key {key:?}"))
                })
            };
            let difficulty = field("difficulty")?;
            let level = Difficulty::parse_lenient(difficulty).ok_or_else(|| {
                KnowledgeError::SchemaViolation(format!(
                    "record {i}: bad difficulty {difficulty:?}"
                ))
            })?;
            KnowledgeModule::new(field("id")?, field("category")?, field("name")?, level)
        })
        .collect()
}

/// A weighted prerequisite edge. Strength is clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge<S> {
    pub from: ModuleId,
    pub to: ModuleId,
    pub strength: S,
}

impl<S: Scalar> DependencyEdge<S> {
    pub fn new(
        from: impl Into<ModuleId>,
        to: impl Into<ModuleId>,
        strength: S,
    ) -> Result<Self, KnowledgeError> {
        let (from, to) = (from.into(), to.into());
        if from == to {
            return Err(KnowledgeError::SelfLoop(from.to_string()));
        }
        Ok(Self {
            from,
            to,
            strength: strength.clamp_unit(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct GraphWire<S> {
    vertices: Vec<ModuleId>,
    edges: Vec<DependencyEdge<S>>,
}

/// Weighted directed graph over module ids. At most one edge per ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "S: Scalar",
    into = "GraphWire<S>",
    try_from = "GraphWire<S>"
)]
pub struct DependencyGraph<S> {
    vertices: BTreeSet<ModuleId>,
    edges: BTreeMap<(ModuleId, ModuleId), S>,
}

impl<S: Scalar> From<DependencyGraph<S>> for GraphWire<S> {
    fn from(g: DependencyGraph<S>) -> Self {
        let edges = g.edges().collect();
        GraphWire {
            vertices: g.vertices.into_iter().collect(),
            edges,
        }
    }
}

impl<S: Scalar> TryFrom<GraphWire<S>> for DependencyGraph<S> {
    type Error = KnowledgeError;

    fn try_from(w: GraphWire<S>) -> Result<Self, Self::Error> {
        let mut g = DependencyGraph::new(w.vertices);
        for e in w.edges {
            g.insert(DependencyEdge::new(e.from, e.to, e.strength)?)?;
        }
        Ok(g)
    }
}

impl<S: Scalar> Default for DependencyGraph<S> {
    fn default() -> Self {
        Self::new(Vec::<ModuleId>::new())
    }
}

impl<S: Scalar> DependencyGraph<S> {
    pub fn new<I, T>(vertices: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<ModuleId>,
    {
        Self {
            vertices: vertices.into_iter().map(Into::into).collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, edge: DependencyEdge<S>) -> Result<(), KnowledgeError> {
        for end in [&edge.from, &edge.to] {
            if !self.vertices.contains(end) {
                return Err(KnowledgeError::UnknownModule(end.to_string()));
            }
        }
        let key = (edge.from, edge.to);
        if self.edges.contains_key(&key) {
            return Err(KnowledgeError::DuplicateEdge(key.0.to_string(), key.1.to_string()));
        }
        self.edges.insert(key, edge.strength);
        Ok(())
    }

    /// Adds an isolated vertex; returns false if it was already present.
    pub fn insert_vertex(&mut self, id: ModuleId) -> bool {
        self.vertices.insert(id)
    }

    /// Convenience wrapper around [`DependencyEdge::new`] + [`Self::insert`].
    pub fn add_edge(&mut self, from: &str, to: &str, strength: S) -> Result<(), KnowledgeError> {
        self.insert(DependencyEdge::new(from, to, strength)?)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &ModuleId> {
        self.vertices.iter()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vertices.contains(id)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = DependencyEdge<S>> + '_ {
        self.edges.iter().map(|((from, to), s)| DependencyEdge {
            from: from.clone(),
            to: to.clone(),
            strength: *s,
        })
    }

    pub fn strength(&self, from: &str, to: &str) -> Option<S> {
        self.edges
            .get(&(ModuleId::from(from), ModuleId::from(to)))
            .copied()
    }

    pub fn out_edges<'a>(&'a self, k: &'a str) -> impl Iterator<Item = (&'a ModuleId, S)> + 'a {
        self.edges
            .iter()
            .filter(move |((from, _), _)| from.as_str() == k)
            .map(|((_, to), s)| (to, *s))
    }

    pub fn in_edges<'a>(&'a self, k: &'a str) -> impl Iterator<Item = (&'a ModuleId, S)> + 'a {
        self.edges
            .iter()
            .filter(move |((_, to), _)| to.as_str() == k)
            .map(|((from, _), s)| (from, *s))
    }

    /// Sources of in-edges into `k` whose strength is strictly above `tau_dep`.
    pub fn prerequisites(&self, k: &str, tau_dep: S) -> Result<BTreeSet<ModuleId>, KnowledgeError> {
        if !self.contains(k) {
            return Err(KnowledgeError::UnknownModule(k.to_string()));
        }
        Ok(self
            .in_edges(k)
            .filter(|(_, s)| *s > tau_dep)
            .map(|(from, _)| from.clone())
            .collect())
    }

    /// Some directed cycle as a list of `(from, to)` pairs, found by a
    /// depth-first search that visits vertices and successors in id order.
    pub fn find_cycle(&self) -> Option<Vec<(ModuleId, ModuleId)>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let ids: Vec<&ModuleId> = self.vertices.iter().collect();
        let index: BTreeMap<&ModuleId, usize> = ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut succ = vec![Vec::new(); ids.len()];
        for (from, to) in self.edges.keys() {
            succ[index[from]].push(index[to]);
        }
        let mut mark = vec![Mark::New; ids.len()];
        for root in 0..ids.len() {
            if mark[root] != Mark::New {
                continue;
            }
            // (vertex, next successor position)
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
                if let Some(&w) = succ[v].get(*pos) {
                    *pos += 1;
                    match mark[w] {
                        Mark::New => {
                            mark[w] = Mark::Active;
                            stack.push((w, 0));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|(u, _)| *u == w).unwrap();
                            let path: Vec<usize> = stack[start..].iter().map(|(u, _)| *u).collect();
                            let mut cycle: Vec<(ModuleId, ModuleId)> = path
                                .windows(2)
                                .map(|p| (ids[p[0]].clone(), ids[p[1]].clone()))
                                .collect();
                            cycle.push((ids[v].clone(), ids[w].clone()));
                            return Some(cycle);
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[v] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Breaks every directed cycle by repeatedly removing the weakest edge on a
    /// detected cycle. Ties go to the lexicographically smallest `(from, to)`.
    pub fn finalize_acyclic(mut self) -> (Self, Vec<DependencyEdge<S>>) {
        let mut removed = Vec::new();
        while let Some(cycle) = self.find_cycle() {
            let weakest = cycle
                .into_iter()
                .map(|key| {
                    let s = self.edges[&key];
                    (key, s)
                })
                .min_by(|(ka, sa), (kb, sb)| {
                    sa.partial_cmp(sb)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then_with(|| ka.cmp(kb))
                })
                .expect("cycle has at least one edge");
            let ((from, to), strength) = weakest;
            self.edges.remove(&(from.clone(), to.clone()));
            removed.push(DependencyEdge { from, to, strength });
        }
        (self, removed)
    }

    /// Levels the `targets` so that each module sits strictly after all of its
    /// in-target prerequisites (edges with strength `> tau_dep`).
    pub fn topological_levels(
        &self,
        targets: &BTreeSet<ModuleId>,
        tau_dep: S,
    ) -> Result<Vec<BTreeSet<ModuleId>>, KnowledgeError> {
        let mut pending: BTreeMap<&ModuleId, BTreeSet<ModuleId>> = BTreeMap::new();
        for t in targets {
            let prereqs = self
                .prerequisites(t.as_str(), tau_dep)?
                .into_iter()
                .filter(|p| targets.contains(p))
                .collect();
            pending.insert(t, prereqs);
        }
        let mut placed: BTreeSet<ModuleId> = BTreeSet::new();
        let mut levels = Vec::new();
        while !pending.is_empty() {
            let level: BTreeSet<ModuleId> = pending
                .iter()
                .filter(|(_, pre)| pre.is_subset(&placed))
                .map(|(k, _)| (*k).clone())
                .collect();
            if level.is_empty() {
                return Err(KnowledgeError::CyclicGraph);
            }
            for k in &level {
                pending.remove(k);
            }
            placed.extend(level.iter().cloned());
            levels.push(level);
        }
        Ok(levels)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        serde_json::from_str(text).map_err(|e| KnowledgeError::MalformedResponse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(list: &[&str]) -> BTreeSet<ModuleId> {
        list.iter().map(|s| ModuleId::from(*s)).collect()
    }

    fn graph(vertices: &[&str], edges: &[(&str, &str, f64)]) -> DependencyGraph<f64> {
        let mut g = DependencyGraph::new(vertices.iter().copied());
        for (a, b, s) in edges {
            g.add_edge(a, b, *s).unwrap();
        }
        g
    }

    const EXAMPLE: &str = r#"Here you go:
```json
[
    {"id": "algebra/linear_equations", "category": "Algebra", "name": "Linear Equations", "difficulty": "introductory"},
    {"id": "algebra/quadratic_equations", "category": "Algebra", "name": "Quadratic Equations", "difficulty": "intermediate"}
]
```"#;

    #[test]
    fn parses_example_response() {
        let h = parse_hierarchy(EXAMPLE, "math").unwrap();
        let got: Vec<&str> = h.ids().map(ModuleId::as_str).collect();
        assert_eq!(got, ["algebra/linear_equations", "algebra/quadratic_equations"]);
        assert_eq!(h.modules[1].difficulty_level, Difficulty::Intermediate);
        assert!(!h.has_target_size());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_hierarchy("[]", "d"),
            Err(KnowledgeError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_hierarchy("no array here", "d"),
            Err(KnowledgeError::MalformedResponse(_))
        ));
        let dup = r#"[{"id":"algebra/x","category":"A","name":"X","difficulty":"advanced"},
                      {"id":"algebra/x","category":"A","name":"X2","difficulty":"advanced"}]"#;
        assert_eq!(
            parse_hierarchy(dup, "d"),
            Err(KnowledgeError::DuplicateId("algebra/x".into()))
        );
        let bad = r#"[{"id":"algebra/x","category":"A","name":"X","difficulty":"expert"}]"#;
        assert!(matches!(parse_hierarchy(bad, "d"), Err(KnowledgeError::SchemaViolation(_))));
        let missing = r#"[{"id":"algebra/x","name":"X","difficulty":"advanced"}]"#;
        assert!(matches!(parse_hierarchy(missing, "d"), Err(KnowledgeError::SchemaViolation(_))));
        let bad_id = r#"[{"id":"a/b/c","category":"A","name":"X","difficulty":"advanced"}]"#;
        assert!(matches!(parse_hierarchy(bad_id, "d"), Err(KnowledgeError::SchemaViolation(_))));
    }

    #[test]
    fn hierarchy_round_trip() {
        let h = parse_hierarchy(EXAMPLE, "math").unwrap();
        assert_eq!(KnowledgeHierarchy::from_json(&h.to_json(), "ignored").unwrap(), h);
        let bare = serde_json::to_string(&h.modules).unwrap();
        assert_eq!(KnowledgeHierarchy::from_json(&bare, "math").unwrap(), h);
    }

    #[test]
    fn edge_construction() {
        assert_eq!(DependencyEdge::new("a/x", "a/y", -0.4).unwrap().strength, 0.0);
        assert_eq!(DependencyEdge::new("a/x", "a/y", 1.7).unwrap().strength, 1.0);
        assert!(DependencyEdge::new("a/x", "a/x", 0.5).is_err());
        let mut g = graph(&["a", "b"], &[("a", "b", 0.5)]);
        assert!(matches!(g.add_edge("a", "b", 0.2), Err(KnowledgeError::DuplicateEdge(..))));
        assert!(matches!(g.add_edge("a", "z", 0.2), Err(KnowledgeError::UnknownModule(_))));
    }

    #[test]
    fn two_cycle_drops_weaker_edge() {
        let g = graph(&["a", "b"], &[("a", "b", 0.5), ("b", "a", 0.35)]);
        let (g, removed) = g.finalize_acyclic();
        assert_eq!(removed.len(), 1);
        assert_eq!((removed[0].from.as_str(), removed[0].to.as_str()), ("b", "a"));
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.strength("a", "b"), Some(0.5));
    }

    #[test]
    fn chain_is_untouched() {
        let g = graph(&["a", "b", "c"], &[("a", "b", 0.5), ("b", "c", 0.5)]);
        let (out, removed) = g.clone().finalize_acyclic();
        assert!(removed.is_empty());
        assert_eq!(out, g);
    }

    #[test]
    fn three_cycle_unique_minimum() {
        let g = graph(&["a", "b", "c"], &[("a", "b", 0.4), ("b", "c", 0.4), ("c", "a", 0.31)]);
        let (out, removed) = g.finalize_acyclic();
        assert_eq!((removed[0].from.as_str(), removed[0].to.as_str()), ("c", "a"));
        assert!(out.is_acyclic());
    }

    #[test]
    fn tie_goes_to_smallest_pair() {
        let g = graph(&["a", "b", "c"], &[("a", "b", 0.4), ("b", "c", 0.4), ("c", "a", 0.4)]);
        let (_, removed) = g.finalize_acyclic();
        assert_eq!((removed[0].from.as_str(), removed[0].to.as_str()), ("a", "b"));
    }

    #[test]
    fn prerequisites_strict() {
        let g = graph(&["a", "b", "k"], &[("a", "k", 0.5), ("b", "k", 0.3)]);
        assert_eq!(g.prerequisites("k", 0.3).unwrap(), ids(&["a"]));
        assert!(g.prerequisites("a", 0.3).unwrap().is_empty());
        let g = graph(&["a", "k"], &[("a", "k", 0.31)]);
        assert_eq!(g.prerequisites("k", 0.3).unwrap(), ids(&["a"]));
        assert!(matches!(g.prerequisites("zz", 0.3), Err(KnowledgeError::UnknownModule(_))));
    }

    #[test]
    fn levels() {
        let chain = graph(&["a", "b", "c"], &[("a", "b", 0.5), ("b", "c", 0.5)]);
        assert_eq!(
            chain.topological_levels(&ids(&["a", "b", "c"]), 0.3).unwrap(),
            vec![ids(&["a"]), ids(&["b"]), ids(&["c"])]
        );
        let free = graph(&["a", "b"], &[]);
        assert_eq!(free.topological_levels(&ids(&["a", "b"]), 0.3).unwrap(), vec![ids(&["a", "b"])]);
        let diamond = graph(
            &["a", "b", "c", "d"],
            &[("a", "b", 0.5), ("a", "c", 0.5), ("b", "d", 0.5), ("c", "d", 0.5)],
        );
        assert_eq!(
            diamond.topological_levels(&ids(&["a", "b", "c", "d"]), 0.3).unwrap(),
            vec![ids(&["a"]), ids(&["b", "c"]), ids(&["d"])]
        );
        let cyclic = graph(&["a", "b"], &[("a", "b", 0.5), ("b", "a", 0.5)]);
        assert_eq!(
            cyclic.topological_levels(&ids(&["a", "b"]), 0.3),
            Err(KnowledgeError::CyclicGraph)
        );
    }

    #[test]
    fn graph_json_round_trip() {
        let g = graph(&["a/x", "a/y", "b/z"], &[("a/x", "a/y", 0.5), ("b/z", "a/y", 0.75)]);
        let text = g.to_json();
        assert!(text.contains("\"vertices\"") && text.contains("\"strength\""));
        assert_eq!(DependencyGraph::<f64>::from_json(&text).unwrap(), g);
        let bad = r#"{"vertices":["a"],"edges":[{"from":"a","to":"b","strength":0.5}]}"#;
        assert!(DependencyGraph::<f64>::from_json(bad).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut g: DependencyGraph<f32> = DependencyGraph::new(["a", "b"]);
        g.add_edge("a", "b", 0.5).unwrap();
        g.add_edge("b", "a", 0.25).unwrap();
        let (g, removed) = g.finalize_acyclic();
        assert_eq!(removed.len(), 1);
        assert!(g.is_acyclic());
    }
}
