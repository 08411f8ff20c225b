//! Experiment configuration: a typed key schema per subcommand, a plain-text
//! `key = value` format with `[section]` headers, and resolution of
//! defaults, file entries and command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mfgan_core::par::Exec;

use crate::error::{CliError, Result};

/// Names the environment variable holding the default output root.
pub const OUT_DIR_ENV: &str = "MFGAN_OUT_DIR";

const DEFAULT_OUT_ROOT: &str = "mfgan-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    MfgTrain,
    SdeCompare,
    FdrProbe,
    ScheduleDemo,
    GanDemo,
}

impl Command {
    pub const ALL: [Command; 5] = [Command::MfgTrain, Command::SdeCompare, Command::FdrProbe, Command::ScheduleDemo, Command::GanDemo];

    pub fn name(self) -> &'static str {
        match self {
            Command::MfgTrain => "mfg-train",
            Command::SdeCompare => "sde-compare",
            Command::FdrProbe => "fdr-probe",
            Command::ScheduleDemo => "schedule-demo",
            Command::GanDemo => "gan-demo",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::MfgTrain => "Train the adversarial mean-field-game solver",
            Command::SdeCompare => "Weak error of discrete ALT/SML training against its SDE approximation",
            Command::FdrProbe => "Fluctuation-dissipation diagnostics along a stationary trajectory",
            Command::ScheduleDemo => "Learning-rate scheduler driven by the second fluctuation-dissipation relation",
            Command::GanDemo => "Minimax value at the optimal discriminator against the JS identity",
        }
    }

    /// Keys specific to this subcommand (the `[run]` keys are shared).
    pub fn schema(self) -> &'static [Key] {
        match self {
            Command::MfgTrain => MFG_TRAIN,
            Command::SdeCompare => SDE_COMPARE,
            Command::FdrProbe => FDR_PROBE,
            Command::ScheduleDemo => SCHEDULE_DEMO,
            Command::GanDemo => GAN_DEMO,
        }
    }

    /// Shared keys followed by the subcommand keys.
    pub fn keys(self) -> impl Iterator<Item = &'static Key> {
        RUN.iter().chain(self.schema())
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::config("run.command", format!("unknown subcommand `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    /// Integer or `auto` (resolved from other keys).
    AutoInt,
    Float,
    /// Float or `none`.
    OptFloat,
    Bool,
    Text,
    Choice(&'static [&'static str]),
    ChoiceList(&'static [&'static str]),
    IntList,
    FloatList,
}

#[derive(Debug)]
pub struct Key {
    pub section: &'static str,
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

impl Key {
    pub fn path(&self) -> String {
        format!("{}.{}", self.section, self.name)
    }
}

const fn key(section: &'static str, name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Key {
    Key { section, name, kind, default, help }
}

const MODES: &[&str] = &["alt", "sml"];
const TOYS: &[&str] = &["bilinear", "linear", "quadratic"];

const RUN: &[Key] = &[
    key("run", "seed", Kind::Int, "0", "master seed"),
    key("run", "out_dir", Kind::Text, "", "output directory (default: $MFGAN_OUT_DIR/<subcommand>)"),
    key("run", "parallel", Kind::Bool, "true", "data-parallel execution (results do not depend on it)"),
];

const MFG_TRAIN: &[Key] = &[
    key("problem", "kind", Kind::Choice(&["ergodic", "time-dependent"]), "ergodic", "problem class"),
    key("problem", "dim", Kind::Int, "1", "spatial dimension (1 or 4 in the reference runs)"),
    key("problem", "horizon", Kind::Float, "1", "time horizon (time-dependent problems)"),
    key("solver", "outer", Kind::AutoInt, "auto", "outer iterations K (auto: 1e5 in 1-D, 2e5 otherwise)"),
    key("solver", "inner_theta", Kind::Int, "1", "generator steps per outer iteration"),
    key("solver", "inner_omega", Kind::Int, "1", "discriminator steps per outer iteration"),
    key("solver", "batch_d", Kind::Int, "128", "discriminator batch size"),
    key("solver", "batch_g", Kind::Int, "128", "generator batch size"),
    key("solver", "beta_d", Kind::Float, "1", "weight of the initial-condition loss"),
    key("solver", "beta_g", Kind::Float, "1", "weight of the terminal-condition loss"),
    key("solver", "lr_d", Kind::Float, "0.001", "discriminator learning rate"),
    key("solver", "lr_g", Kind::Float, "0.001", "generator learning rate"),
    key("solver", "lambda_u", Kind::Float, "1", "weight of the zero-mean penalty on u"),
    key("solver", "eval_grid", Kind::AutoInt, "auto", "evaluation points (auto: 256 in 1-D, 1e4 otherwise)"),
    key("solver", "norm_grid", Kind::AutoInt, "auto", "normalization nodes per axis (auto: 256 in 1-D, 8 otherwise)"),
    key("solver", "hidden", Kind::IntList, "50, 50, 50", "hidden layer widths"),
    key("solver", "activation", Kind::Choice(&["tanh", "sigmoid"]), "tanh", "hidden activation"),
    key("solver", "optimizer", Kind::Choice(&["adam", "sgd"]), "adam", "parameter update rule"),
    key("solver", "log_every", Kind::Int, "100", "outer iterations between metrics rows"),
    key("solver", "checkpoint_every", Kind::Int, "10000", "outer iterations between checkpoints (0: final only)"),
];

const SDE_COMPARE: &[Key] = &[
    key("problem", "toy", Kind::Choice(TOYS), "linear", "toy problem"),
    key("study", "mode", Kind::ChoiceList(MODES), "alt, sml", "update modes to compare"),
    key("study", "etas", Kind::FloatList, "0.05, 0.02, 0.01", "learning rates"),
    key("study", "replicas", Kind::Int, "100000", "Monte Carlo replicas per learning rate"),
    key("study", "horizon", Kind::Float, "1", "time horizon"),
    key("study", "batch_size", Kind::Int, "64", "minibatch size"),
    key("study", "substeps", Kind::Int, "50", "Euler-Maruyama steps per learning-rate step"),
    key("study", "init_theta", Kind::FloatList, "1", "initial generator parameters"),
    key("study", "init_omega", Kind::FloatList, "0", "initial discriminator parameters"),
    key("study", "test_function", Kind::Choice(&["theta", "omega", "norm2", "const"]), "theta", "test function"),
];

const FDR_PROBE: &[Key] = &[
    key("problem", "toy", Kind::Choice(TOYS), "quadratic", "toy problem"),
    key("probe", "mode", Kind::Choice(MODES), "sml", "update mode"),
    key("probe", "etas", Kind::FloatList, "0.02", "learning rates (one row each)"),
    key("probe", "batch_size", Kind::Int, "8", "minibatch size"),
    key("probe", "beta", Kind::OptFloat, "none", "fixed inverse temperature (SDE source only; none: 2B/eta)"),
    key("probe", "source", Kind::Choice(&["discrete", "sde"]), "discrete", "trajectory generator"),
    key("probe", "dt", Kind::Float, "0.001", "Euler-Maruyama step (SDE source)"),
    key("probe", "steps", Kind::Int, "200000", "recorded samples, half of them burn-in"),
    key("probe", "thin", Kind::Int, "1", "steps between recorded samples"),
    key("probe", "init", Kind::FloatList, "0, 0", "initial state (generator then discriminator)"),
];

const SCHEDULE_DEMO: &[Key] = &[
    key("scheduler", "eta0", Kind::Float, "0.3", "initial learning rate"),
    key("scheduler", "epsilon", Kind::Float, "0.05", "tolerance on |ratio - 1|"),
    key("scheduler", "delta", Kind::Float, "0.1", "decay factor per trigger"),
    key("scheduler", "batch_size", Kind::Int, "8", "minibatch size"),
    key("stream", "source", Kind::Choice(&["scripted", "training"]), "scripted", "ratio stream"),
    key("stream", "ratio_start", Kind::Float, "3", "first scripted ratio"),
    key("stream", "ratio_end", Kind::Float, "1", "last scripted ratio"),
    key("stream", "steps", Kind::Int, "100", "stream length"),
    key("stream", "toy", Kind::Choice(TOYS), "quadratic", "toy problem (training source)"),
    key("stream", "init", Kind::FloatList, "2, -2", "initial state (training source)"),
];

const GAN_DEMO: &[Key] = &[
    key("densities", "points", Kind::FloatList, "0, 1", "atoms shared by both densities"),
    key("densities", "real", Kind::FloatList, "0.5, 0.5", "data masses"),
    key("densities", "fake", Kind::FloatList, "0.5, 0.5", "generator masses"),
    key("densities", "random_pairs", Kind::Int, "0", "additional random density pairs"),
    key("densities", "random_atoms", Kind::Int, "4", "atoms per random pair"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    OptFloat(Option<f64>),
    Bool(bool),
    Text(String),
    Auto,
    TextList(Vec<String>),
    IntList(Vec<u64>),
    FloatList(Vec<f64>),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) | Value::OptFloat(Some(v)) => write!(f, "{v:?}"),
            Value::OptFloat(None) => f.write_str("none"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::Auto => f.write_str("auto"),
            Value::TextList(v) => f.write_str(&join(v)),
            Value::IntList(v) => f.write_str(&join(v)),
            Value::FloatList(v) => f.write_str(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")),
        }
    }
}

fn list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_int(s: &str) -> std::result::Result<u64, String> {
    // accepts `1e5`-style literals when they are exact integers
    s.parse::<u64>().or_else(|_| match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got `{s}`")),
    })
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got `{s}`")),
    }
}

fn parse_choice(s: &str, choices: &[&str]) -> std::result::Result<String, String> {
    if choices.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("expected one of {}, got `{s}`", choices.join(" | ")))
    }
}

impl Kind {
    pub fn parse(self, raw: &str) -> std::result::Result<Value, String> {
        let s = raw.trim();
        Ok(match self {
            Kind::Int => Value::Int(parse_int(s)?),
            Kind::AutoInt if s == "auto" => Value::Auto,
            Kind::AutoInt => Value::Int(parse_int(s)?),
            Kind::Float => Value::Float(parse_float(s)?),
            Kind::OptFloat if s == "none" => Value::OptFloat(None),
            Kind::OptFloat => Value::OptFloat(Some(parse_float(s)?)),
            Kind::Bool => match s {
                "true" | "yes" | "1" => Value::Bool(true),
                "false" | "no" | "0" => Value::Bool(false),
                _ => return Err(format!("expected true or false, got `{s}`")),
            },
            Kind::Text => Value::Text(s.to_string()),
            Kind::Choice(c) => Value::Text(parse_choice(s, c)?),
            Kind::ChoiceList(c) => Value::TextList(list(s).map(|x| parse_choice(x, c)).collect::<std::result::Result<_, _>>()?),
            Kind::IntList => Value::IntList(list(s).map(parse_int).collect::<std::result::Result<_, _>>()?),
            Kind::FloatList => Value::FloatList(list(s).map(parse_float).collect::<std::result::Result<_, _>>()?),
        })
    }
}

/// One `section.key = value` line of a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub path: String,
    pub value: String,
}

/// Splits a config text into entries; blank lines and `#` comments are
/// skipped. Entries before the first header belong to `run`.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut section = "run".to_string();
    let mut out: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
                .ok_or_else(|| CliError::config(format!("line {line}"), format!("malformed section header `{t}`")))?;
            section = name.to_string();
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {line}"), format!("expected `key = value`, got `{t}`")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::config(format!("line {line}"), "empty key"));
        }
        let path = format!("{section}.{k}");
        if let Some(prev) = out.iter().find(|e| e.path == path) {
            return Err(CliError::config(path, format!("set twice (lines {} and {line})", prev.line)));
        }
        out.push(Entry { line, path, value: v.trim().to_string() });
    }
    Ok(out)
}

/// A fully resolved experiment: every schema key carries a typed value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub parallel: bool,
    values: BTreeMap<&'static str, Value>,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Result<Self> {
        Self::resolve(Some(command), None, &[])
    }

    /// Resolves defaults, then the config file, then `overrides` (bare key
    /// names or `section.key` paths). The subcommand comes from `command`
    /// or from `command = …` in the file's `[run]` section.
    pub fn resolve(command: Option<Command>, file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries = match file {
            Some(text) => parse_entries(text)?,
            None => Vec::new(),
        };
        let from_file = match entries.iter().position(|e| e.path == "run.command") {
            Some(i) => Some(entries.remove(i).value.parse::<Command>()?),
            None => None,
        };
        let command = match (command, from_file) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::config("run.command", format!("file is for `{b}` but `{a}` was requested")));
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => return Err(CliError::config("run.command", "no subcommand given")),
        };

        let mut raw: BTreeMap<&'static str, String> = command.keys().map(|k| (k.name, k.default.to_string())).collect();
        for e in entries {
            let k = command
                .keys()
                .find(|k| k.path() == e.path)
                .ok_or_else(|| CliError::config(&e.path, format!("unknown key for `{command}` (line {})", e.line)))?;
            raw.insert(k.name, e.value);
        }
        for (name, value) in overrides {
            let k = command
                .keys()
                .find(|k| k.name == name || k.path() == *name)
                .ok_or_else(|| CliError::config(name, format!("unknown key for `{command}`")))?;
            raw.insert(k.name, value.clone());
        }

        let mut values = BTreeMap::new();
        for k in command.keys() {
            let v = k.kind.parse(&raw[k.name]).map_err(|m| CliError::config(k.path(), m))?;
            values.insert(k.name, v);
        }
        let take = |values: &mut BTreeMap<&'static str, Value>, name: &str| values.remove(name).expect("shared key");
        let seed = match take(&mut values, "seed") {
            Value::Int(s) => s,
            _ => unreachable!(),
        };
        let parallel = take(&mut values, "parallel") == Value::Bool(true);
        let out_dir = match take(&mut values, "out_dir") {
            Value::Text(s) if !s.is_empty() => PathBuf::from(s),
            _ => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
                .join(command.name()),
        };
        let mut cfg = ExperimentConfig { command, seed, out_dir, parallel, values };
        cfg.finalize()?;
        Ok(cfg)
    }

    /// Replaces `auto` values and checks cross-key constraints.
    fn finalize(&mut self) -> Result<()> {
        match self.command {
            Command::MfgTrain => {
                let dim = self.usize("dim");
                if dim == 0 {
                    return Err(CliError::config("problem.dim", "must be at least 1"));
                }
                let base = mfgan_core::mfg::SolverConfig::for_dim(dim);
                for (name, fallback) in [("outer", base.outer_iters), ("eval_grid", base.eval_grid), ("norm_grid", base.norm_grid)] {
                    if self.values[name] == Value::Auto {
                        self.values.insert(name, Value::Int(fallback as u64));
                    }
                }
                if self.usize("log_every") == 0 {
                    return Err(CliError::config("solver.log_every", "must be positive"));
                }
                if self.usizes("hidden").contains(&0) {
                    return Err(CliError::config("solver.hidden", "widths must be positive"));
                }
            }
            Command::SdeCompare => {
                if self.texts("mode").is_empty() {
                    return Err(CliError::config("study.mode", "at least one mode required"));
                }
                self.positive_list("etas", "study.etas")?;
            }
            Command::FdrProbe => {
                self.positive_list("etas", "probe.etas")?;
                if self.opt_f64("beta").is_some() && self.text("source") != "sde" {
                    return Err(CliError::config("probe.beta", "a fixed temperature needs `source = sde`"));
                }
            }
            Command::ScheduleDemo => {}
            Command::GanDemo => {
                let n = self.floats("points").len();
                for name in ["real", "fake"] {
                    if self.floats(name).len() != n {
                        return Err(CliError::config(format!("densities.{name}"), format!("expected {n} masses to match `points`")));
                    }
                }
            }
        }
        Ok(())
    }

    fn positive_list(&self, name: &str, path: &str) -> Result<()> {
        let v = self.floats(name);
        if v.is_empty() || v.iter().any(|x| *x <= 0.0) {
            return Err(CliError::config(path, "expected a non-empty list of positive numbers"));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn value(&self, name: &str) -> &Value {
        self.values.get(name).unwrap_or_else(|| panic!("`{name}` is not a `{}` key", self.command))
    }

    pub fn u64(&self, name: &str) -> u64 {
        match self.value(name) {
            Value::Int(v) => *v,
            other => panic!("`{name}` is not an integer: {other:?}"),
        }
    }

    pub fn usize(&self, name: &str) -> usize {
        self.u64(name) as usize
    }

    pub fn f64(&self, name: &str) -> f64 {
        match self.value(name) {
            Value::Float(v) => *v,
            other => panic!("`{name}` is not a number: {other:?}"),
        }
    }

    pub fn opt_f64(&self, name: &str) -> Option<f64> {
        match self.value(name) {
            Value::OptFloat(v) => *v,
            other => panic!("`{name}` is not an optional number: {other:?}"),
        }
    }

    pub fn text(&self, name: &str) -> &str {
        match self.value(name) {
            Value::Text(v) => v,
            other => panic!("`{name}` is not text: {other:?}"),
        }
    }

    pub fn texts(&self, name: &str) -> &[String] {
        match self.value(name) {
            Value::TextList(v) => v,
            other => panic!("`{name}` is not a list of names: {other:?}"),
        }
    }

    pub fn usizes(&self, name: &str) -> Vec<usize> {
        match self.value(name) {
            Value::IntList(v) => v.iter().map(|x| *x as usize).collect(),
            other => panic!("`{name}` is not a list of integers: {other:?}"),
        }
    }

    pub fn floats(&self, name: &str) -> &[f64] {
        match self.value(name) {
            Value::FloatList(v) => v,
            other => panic!("`{name}` is not a list of numbers: {other:?}"),
        }
    }

    /// The resolved configuration in the input format; parsing it back
    /// yields an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in self.command.keys() {
            if k.section != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = k.section;
                out.push_str(&format!("[{section}]\n"));
                if section == "run" {
                    out.push_str(&format!("command = {}\n", self.command));
                }
            }
            let v = match k.name {
                "seed" => self.seed.to_string(),
                "out_dir" => self.out_dir.display().to_string(),
                "parallel" => self.parallel.to_string(),
                name => self.values[name].to_string(),
            };
            out.push_str(&format!("{} = {v}\n", k.name));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn key_names_are_unique_per_command() {
        for c in Command::ALL {
            let names: Vec<_> = c.keys().map(|k| k.name).collect();
            let mut sorted = names.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), names.len(), "{c}");
            for k in c.keys() {
                k.kind.parse(k.default).unwrap_or_else(|e| panic!("{c} {}: {e}", k.name));
            }
        }
    }

    #[test]
    fn precedence_and_auto_values() {
        let file = "[run]\ncommand = mfg-train\nseed = 9\n\n[problem]\ndim = 4\n[solver]\nlr_d = 0.5 # not a comment\n";
        let err = ExperimentConfig::resolve(None, Some(file), &[]).unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "solver.lr_d"));
        let file = "[run]\ncommand = mfg-train\nseed = 9\n\n[problem]\ndim = 4\n[solver]\nlr_d = 0.5\nhidden = 8, 8\n";
        let cfg = ExperimentConfig::resolve(None, Some(file), &set(&[("lr_d", "0.25"), ("solver.outer", "1e3")])).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.f64("lr_d"), 0.25);
        assert_eq!(cfg.usize("outer"), 1000);
        assert_eq!(cfg.usize("eval_grid"), 10_000);
        assert_eq!(cfg.usize("norm_grid"), 8);
        assert_eq!(cfg.usizes("hidden"), vec![8, 8]);
    }

    #[test]
    fn manifest_round_trips() {
        for c in Command::ALL {
            let cfg = ExperimentConfig::resolve(Some(c), None, &set(&[("out_dir", "somewhere/else"), ("seed", "17")])).unwrap();
            let again = ExperimentConfig::resolve(None, Some(&cfg.to_text()), &[]).unwrap();
            assert_eq!(cfg, again, "{c}");
        }
        let cfg = ExperimentConfig::resolve(Some(Command::FdrProbe), None, &set(&[("etas", "0.1, 1e-7"), ("beta", "3.25"), ("source", "sde")])).unwrap();
        let again = ExperimentConfig::resolve(None, Some(&cfg.to_text()), &[]).unwrap();
        assert_eq!(again.floats("etas"), &[0.1, 1e-7]);
        assert_eq!(again.opt_f64("beta"), Some(3.25));
    }

    #[test]
    fn errors_name_the_offending_key() {
        let cases: Vec<(Option<Command>, &str, Vec<(String, String)>, &str)> = vec![
            (Some(Command::GanDemo), "", set(&[("lr_d", "1")]), "lr_d"),
            (Some(Command::MfgTrain), "[solver]\nbogus = 1\n", vec![], "solver.bogus"),
            (Some(Command::MfgTrain), "[problem]\nlr_d = 1\n", vec![], "problem.lr_d"),
            (Some(Command::MfgTrain), "", set(&[("dim", "two")]), "problem.dim"),
            (Some(Command::MfgTrain), "", set(&[("optimizer", "rmsprop")]), "solver.optimizer"),
            (Some(Command::SdeCompare), "", set(&[("mode", "alt, gd")]), "study.mode"),
            (Some(Command::SdeCompare), "", set(&[("etas", "0.1, -0.1")]), "study.etas"),
            (Some(Command::FdrProbe), "", set(&[("beta", "2")]), "probe.beta"),
            (Some(Command::GanDemo), "", set(&[("real", "1")]), "densities.real"),
            (Some(Command::GanDemo), "[run]\ncommand = fdr-probe\n", vec![], "run.command"),
            (None, "seed = 1\n", vec![], "run.command"),
            (Some(Command::GanDemo), "[run\n", vec![], "line 1"),
            (Some(Command::GanDemo), "[run]\nseed 1\n", vec![], "line 2"),
            (Some(Command::GanDemo), "[run]\nseed = 1\nseed = 2\n", vec![], "run.seed"),
        ];
        for (cmd, file, ov, want) in cases {
            match ExperimentConfig::resolve(cmd, Some(file), &ov) {
                Err(CliError::Config { key, .. }) => assert_eq!(key, want),
                other => panic!("expected a config error at {want}, got {other:?}"),
            }
        }
    }

    #[test]
    fn comments_and_top_level_run_keys() {
        let text = "# a run\ncommand = gan-demo\nseed = 3\n\n[densities]\n# masses\nreal = 0.25, 0.75\n";
        let cfg = ExperimentConfig::resolve(None, Some(text), &[]).unwrap();
        assert_eq!(cfg.command, Command::GanDemo);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.floats("real"), &[0.25, 0.75]);
    }
}
