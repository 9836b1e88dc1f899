//! One command-line flag per scalar config field, named after the field.

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches};
use pedagogy_core::pipeline::{PipelineError, RunConfig};

#[derive(Clone, Copy)]
enum Kind {
    Float,
    Int,
    Bool,
    Text,
}

use Kind::*;

/// (field, kebab-case alias, value kind)
const FIELDS: &[(&str, &str, Kind)] = &[
    ("tau_gap", "tau-gap", Float),
    ("tau_high", "tau-high", Float),
    ("tau_low", "tau-low", Float),
    ("tau_dep", "tau-dep", Float),
    ("alpha", "alpha", Float),
    ("tau_zpd", "tau-zpd", Float),
    ("tau_mastery", "tau-mastery", Float),
    ("epsilon", "epsilon", Float),
    ("target_fraction", "target-fraction", Float),
    ("items_per_seed", "items-per-seed", Int),
    ("max_epochs_per_stage", "max-epochs-per-stage", Int),
    ("max_remedial_rounds", "max-remedial-rounds", Int),
    ("remedial_items", "remedial-items", Int),
    ("bridging_items", "bridging-items", Int),
    ("bridging", "bridging", Bool),
    ("rng_seed", "rng-seed", Int),
    ("snapshot_cadence", "snapshot-cadence", Text),
    ("stall_policy", "stall-policy", Text),
    ("dependency_mode", "dependency-mode", Text),
    ("calibration_max_epochs", "calibration-max-epochs", Int),
    ("calibration_items_per_epoch", "calibration-items-per-epoch", Int),
    ("calibration_exposure_epochs", "calibration-exposure-epochs", Int),
    ("graph_file", "graph-file", Text),
    ("size_cap", "size-cap", Text),
    ("complexity_cap", "complexity-cap", Text),
    ("lenient_difficulty", "lenient-difficulty", Bool),
    ("seed_context", "seed-context", Bool),
    ("teacher_parallelism", "teacher-parallelism", Int),
];

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    values: Vec<(&'static str, Kind, String)>,
}

impl std::fmt::Debug for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Float => "number",
            Int => "integer",
            Bool => "true|false",
            Text => "text",
        })
    }
}

impl Overrides {
    /// Applies the flags on top of `config` and re-validates it.
    pub fn apply(&self, config: RunConfig) -> Result<RunConfig, PipelineError> {
        if self.values.is_empty() {
            return Ok(config);
        }
        let mut table = toml::Table::try_from(&config).map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, kind, raw) in &self.values {
            let bad = || PipelineError::Config(format!("--{name}: {raw:?} is not a valid {kind:?}"));
            let value = match kind {
                Float => toml::Value::Float(raw.parse().map_err(|_| bad())?),
                Int => toml::Value::Integer(raw.parse().map_err(|_| bad())?),
                Bool => toml::Value::Boolean(raw.parse().map_err(|_| bad())?),
                Text => toml::Value::String(raw.clone()),
            };
            table.insert(name.to_string(), value);
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

impl FromArgMatches for Overrides {
    fn from_arg_matches(matches: &ArgMatches) -> Result<Self, clap::Error> {
        let mut o = Self::default();
        o.update_from_arg_matches(matches)?;
        Ok(o)
    }

    fn update_from_arg_matches(&mut self, matches: &ArgMatches) -> Result<(), clap::Error> {
        for (name, _, kind) in FIELDS {
            if let Some(v) = matches.get_one::<String>(name) {
                self.values.push((name, *kind, v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        FIELDS.iter().fold(cmd, |cmd, (name, kebab, kind)| {
            let mut arg = Arg::new(*name)
                .long(*name)
                .value_name(match kind {
                    Float => "X",
                    Int => "N",
                    Bool => "BOOL",
                    Text => "TEXT",
                })
                .help_heading("Config overrides")
                .help("Overrides the config field of the same name");
            if kebab != name {
                arg = arg.visible_alias(*kebab);
            }
            cmd.arg(arg)
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}
