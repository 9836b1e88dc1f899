// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod backends;
pub mod corpus;
pub mod evaluation;
pub mod identifier;
pub mod knowledge;
pub mod organizer;
pub mod pipeline;
pub mod scalar;
pub(crate) mod util;

pub type DependencyGraph = knowledge::DependencyGraph<f64>;
pub type ScoreReport = evaluation::ScoreReport<f64>;
pub type PerformanceSnapshot = evaluation::PerformanceSnapshot<f64>;
pub type PerformanceTrajectory = evaluation::PerformanceTrajectory<f64>;
pub type GapReport = identifier::GapReport<f64>;
pub type SeverityRanking = identifier::SeverityRanking<f64>;
pub type TargetSet = identifier::TargetSet<f64>;
pub type Curriculum = organizer::Curriculum<f64>;
pub type Stage = organizer::Stage<f64>;
