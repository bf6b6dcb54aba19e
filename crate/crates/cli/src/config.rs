//! Run configuration in a flat sectioned text format.
//!
//! ```text
//! # comment
//! [run]
//! experiment = lambda-sweep
//! seeds = 0, 1, 2
//!
//! [task.modsum]
//! vocab = 6
//! ```
//!
//! Every key is checked against the schema and errors carry the line number.
//! The full schema lives in `docs/config.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use opdlab_core::policy::DEFAULT_ENUM_CAP;
use opdlab_core::trainers::EXOPD_LAMBDA;
use opdlab_core::{
    Algorithm, Averaging, EstimatorVariant, OptimizerConfig, SkillProfile, TaskFamily, TaskSpec, Vocab,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LambdaSweep,
    MultiTeacher,
    StrongToWeak,
    RewardCorrectionAb,
    RlTeacher,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::LambdaSweep,
        Experiment::MultiTeacher,
        Experiment::StrongToWeak,
        Experiment::RewardCorrectionAb,
        Experiment::RlTeacher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LambdaSweep => "lambda-sweep",
            Experiment::MultiTeacher => "multi-teacher",
            Experiment::StrongToWeak => "strong-to-weak",
            Experiment::RewardCorrectionAb => "reward-correction-ab",
            Experiment::RlTeacher => "rl-teacher",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Optimizer settings of one training stage; the seed comes from the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_prompts: usize,
    pub rollout_n: usize,
}

impl StageConfig {
    pub fn optimizer(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            algorithm: self.algorithm,
            learning_rate: self.learning_rate,
            steps: self.steps,
            batch_prompts: self.batch_prompts,
            rollout_n: self.rollout_n,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillSettings {
    pub stage: StageConfig,
    pub estimator: EstimatorVariant,
    pub lambdas: Vec<f64>,
    pub exopd_lambda: f64,
    pub averaging: Averaging,
    pub exact: bool,
    /// Step multiplier for multi-teacher arms.
    pub multi_step_factor: u64,
    pub expo_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub name: String,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub enum_cap: u64,
    pub eval_samples: usize,
    pub kl_samples: usize,
    pub log_every: u64,
    pub tasks: Vec<TaskSpec>,
    /// Shared base, or the student base when a teacher base is configured.
    pub base: SkillProfile,
    pub teacher_base: Option<SkillProfile>,
    pub rl: StageConfig,
    pub distill: DistillSettings,
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_sections(text: &str, path: &str) -> Result<Vec<Section>> {
    let err = |line: usize, message: String| HarnessError::ConfigLine {
        path: path.to_string(),
        line,
        message,
    };
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = strip_comment(raw).trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated section header `{s}`")))?
                .trim();
            if name.is_empty() {
                return Err(err(line, "empty section name".into()));
            }
            if let Some(prev) = sections.iter().find(|sec| sec.name == name) {
                return Err(err(line, format!("section [{name}] already defined on line {}", prev.line)));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{s}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(err(line, "missing key before `=`".into()));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| err(line, format!("key `{key}` appears before any [section]")))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Typed access to one section; remembers which keys were read so the rest
/// can be rejected.
struct Fields<'a> {
    path: &'a str,
    section: &'a Section,
    read: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(path: &'a str, section: &'a Section) -> Self {
        Fields {
            path,
            section,
            read: Vec::new(),
        }
    }

    fn err(&self, line: usize, message: String) -> HarnessError {
        HarnessError::ConfigLine {
            path: self.path.to_string(),
            line,
            message,
        }
    }

    fn get<T>(&mut self, key: &'static str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        self.read.push(key);
        let Some(entry) = self.section.entries.iter().find(|e| e.key == key) else {
            return Ok(None);
        };
        parse(&entry.value).map(Some).ok_or_else(|| {
            self.err(
                entry.line,
                format!("[{}] {key}: expected {what}, got `{}`", self.section.name, entry.value),
            )
        })
    }

    fn require<T>(&mut self, key: &'static str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<T> {
        let line = self.section.line;
        let name = self.section.name.clone();
        self.get(key, parse, what)?
            .ok_or_else(|| self.err(line, format!("[{name}] is missing required key `{key}`")))
    }

    fn finish(self) -> Result<()> {
        for e in &self.section.entries {
            if !self.read.contains(&e.key.as_str()) {
                return Err(self.err(
                    e.line,
                    format!("unknown key `{}` in [{}] (known: {})", e.key, self.section.name, self.read.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

fn p_u64(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn p_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn p_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn p_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn p_list<T>(parse: fn(&str) -> Option<T>) -> impl Fn(&str) -> Option<Vec<T>> {
    move |s| {
        let items: Option<Vec<T>> = s.split(',').map(|x| parse(x.trim())).collect();
        items.filter(|v| !v.is_empty())
    }
}

fn p_averaging(s: &str) -> Option<Averaging> {
    match s {
        "per-trajectory" => Some(Averaging::PerTrajectory),
        "per-token" => Some(Averaging::PerToken),
        _ => None,
    }
}

fn p_name(s: &str) -> Option<String> {
    let ok = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    ok.then(|| s.to_string())
}

fn read_profile(f: &mut Fields<'_>) -> Result<SkillProfile> {
    Ok(SkillProfile {
        order: f.require("order", p_usize, "a context order")?,
        skill: f.get("skill", p_f64, "a real")?.unwrap_or(1.5),
        noise: f.get("noise", p_f64, "a real >= 0")?.unwrap_or(1.0),
        seed: f.get("seed", p_u64, "an unsigned integer")?.unwrap_or(0),
    })
}

fn read_stage(f: &mut Fields<'_>, default_steps: u64) -> Result<StageConfig> {
    let algorithm = f
        .get("algorithm", Algorithm::from_name, "sgd or adam-like")?
        .unwrap_or(Algorithm::Sgd);
    Ok(StageConfig {
        algorithm,
        learning_rate: f
            .get("learning_rate", p_f64, "a real")?
            .unwrap_or(algorithm.default_learning_rate()),
        steps: f.get("steps", p_u64, "an unsigned integer")?.unwrap_or(default_steps),
        batch_prompts: f.get("batch_prompts", p_usize, "a positive integer")?.unwrap_or(32),
        rollout_n: f.get("rollout_n", p_usize, "a positive integer")?.unwrap_or(4),
    })
}

fn read_task(f: &mut Fields<'_>, family: TaskFamily) -> Result<TaskSpec> {
    let line = f.section.line;
    let size = f.require("vocab", p_usize, "a vocabulary size")?;
    let eos = f.get("eos", p_u64, "a token id")?.unwrap_or(size.saturating_sub(1) as u64);
    let vocab = Vocab::new(size, eos as u32).map_err(|e| f.err(line, e.to_string()))?;
    let difficulty = f.require("difficulty", p_usize, "a positive integer")?;
    let alphabet = f.get("alphabet", p_usize, "a positive integer")?.unwrap_or(size - 1);
    Ok(TaskSpec {
        family,
        vocab,
        horizon: f.require("horizon", p_usize, "a positive integer")?,
        num_prompts: f.get("num_prompts", p_usize, "a positive integer")?.unwrap_or(64),
        difficulty,
        alphabet,
        split_seed: f.get("split_seed", p_u64, "an unsigned integer")?.unwrap_or(0),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Parses and validates; `origin` prefixes error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let sections = split_sections(text, origin)?;
        let mut by_name: BTreeMap<&str, &Section> = BTreeMap::new();
        for s in &sections {
            by_name.insert(s.name.as_str(), s);
        }
        let err = |line: usize, message: String| HarnessError::ConfigLine {
            path: origin.to_string(),
            line,
            message,
        };

        let run = by_name
            .get("run")
            .ok_or_else(|| HarnessError::Config(format!("{origin}: missing [run] section")))?;
        let mut f = Fields::new(origin, run);
        let experiment = f.require("experiment", Experiment::from_name, "an experiment name")?;
        let name = f.get("name", p_name, "a name of [A-Za-z0-9_-]")?.unwrap_or_else(|| experiment.name().to_string());
        let seeds = f.get("seeds", p_list(p_u64), "a comma-separated seed list")?.unwrap_or(vec![0, 1, 2]);
        let out = f.get("out", |s| (!s.is_empty()).then(|| PathBuf::from(s)), "a path")?;
        let jobs = f.get("jobs", p_usize, "a positive integer")?.unwrap_or(1);
        let enum_cap = f.get("enum_cap", p_u64, "an unsigned integer")?.unwrap_or(DEFAULT_ENUM_CAP);
        let eval_samples = f.get("eval_samples", p_usize, "a positive integer")?.unwrap_or(32);
        let kl_samples = f.get("kl_samples", p_usize, "a positive integer")?.unwrap_or(1024);
        let log_every = f.get("log_every", p_u64, "a positive integer")?.unwrap_or(10);
        f.finish()?;

        let mut tasks = Vec::new();
        let mut base = None;
        let mut teacher_base = None;
        let mut rl = None;
        let mut distill = None;
        for s in &sections {
            let mut f = Fields::new(origin, s);
            match s.name.as_str() {
                "run" => continue,
                "base" => base = Some(read_profile(&mut f)?),
                "teacher-base" => teacher_base = Some(read_profile(&mut f)?),
                "rl" => rl = Some(read_stage(&mut f, 300)?),
                "distill" => {
                    let stage = read_stage(&mut f, 100)?;
                    distill = Some(DistillSettings {
                        stage,
                        estimator: f
                            .get("estimator", EstimatorVariant::from_name, "an estimator name")?
                            .unwrap_or(EstimatorVariant::Gopd),
                        lambdas: f
                            .get("lambdas", p_list(p_f64), "a comma-separated list of reals")?
                            .unwrap_or(vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]),
                        exopd_lambda: f.get("exopd_lambda", p_f64, "a real")?.unwrap_or(EXOPD_LAMBDA),
                        averaging: f
                            .get("averaging", p_averaging, "per-trajectory or per-token")?
                            .unwrap_or_default(),
                        exact: f.get("exact", p_bool, "true or false")?.unwrap_or(false),
                        multi_step_factor: f.get("multi_step_factor", p_u64, "a positive integer")?.unwrap_or(2),
                        expo_alpha: f.get("expo_alpha", p_f64, "a real")?.unwrap_or(0.5),
                    });
                }
                other => {
                    let family = other
                        .strip_prefix("task.")
                        .and_then(TaskFamily::from_name)
                        .ok_or_else(|| {
                            err(
                                s.line,
                                format!(
                                    "unknown section [{other}] (known: run, task.modsum, task.copy-reverse, base, teacher-base, rl, distill)"
                                ),
                            )
                        })?;
                    tasks.push(read_task(&mut f, family)?);
                }
            }
            f.finish()?;
        }

        let base = base.ok_or_else(|| HarnessError::Config(format!("{origin}: missing [base] section")))?;
        let default_stage = |steps| StageConfig {
            algorithm: Algorithm::Sgd,
            learning_rate: Algorithm::Sgd.default_learning_rate(),
            steps,
            batch_prompts: 32,
            rollout_n: 4,
        };
        let config = RunConfig {
            experiment,
            name,
            seeds,
            out,
            jobs,
            enum_cap,
            eval_samples,
            kl_samples,
            log_every,
            tasks,
            base,
            teacher_base,
            rl: rl.unwrap_or_else(|| default_stage(300)),
            distill: distill.unwrap_or_else(|| DistillSettings {
                stage: default_stage(100),
                estimator: EstimatorVariant::Gopd,
                lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
                exopd_lambda: EXOPD_LAMBDA,
                averaging: Averaging::PerTrajectory,
                exact: false,
                multi_step_factor: 2,
                expo_alpha: 0.5,
            }),
        };
        config.validate(origin, &by_name)?;
        Ok(config)
    }

    fn validate(&self, origin: &str, sections: &BTreeMap<&str, &Section>) -> Result<()> {
        let at = |section: &str, message: String| match sections.get(section) {
            Some(s) => HarnessError::ConfigLine {
                path: origin.to_string(),
                line: s.line,
                message,
            },
            None => HarnessError::Config(format!("{origin}: {message}")),
        };
        if self.jobs == 0 || self.eval_samples == 0 || self.kl_samples == 0 || self.log_every == 0 {
            return Err(at("run", "jobs, eval_samples, kl_samples and log_every must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(HarnessError::Config(format!("{origin}: at least one [task.*] section is required")));
        }
        for t in &self.tasks {
            t.validate()
                .map_err(|e| at(&format!("task.{}", t.family.name()), e.to_string()))?;
        }
        let vocab = self.tasks[0].vocab;
        let horizon = self.tasks[0].horizon;
        if self.tasks.iter().any(|t| t.vocab != vocab || t.horizon != horizon) {
            return Err(HarnessError::Config(format!(
                "{origin}: all tasks must share one vocabulary and horizon"
            )));
        }
        let needs_two = self.experiment == Experiment::MultiTeacher;
        if needs_two && self.tasks.len() < 2 {
            return Err(at("run", "multi-teacher needs at least two [task.*] sections".into()));
        }
        let single = matches!(self.experiment, Experiment::StrongToWeak | Experiment::RewardCorrectionAb);
        if single && self.tasks.len() != 1 {
            return Err(at("run", format!("{} takes exactly one [task.*] section", self.experiment.name())));
        }
        if single && self.teacher_base.is_none() {
            return Err(at("run", format!("{} needs a [teacher-base] section", self.experiment.name())));
        }
        for (name, p) in std::iter::once(("base", &self.base)).chain(self.teacher_base.iter().map(|p| ("teacher-base", p))) {
            if p.order > horizon || p.noise < 0.0 {
                return Err(at(name, format!("order must be <= horizon {horizon} and noise >= 0")));
            }
        }
        for (name, stage) in [("rl", &self.rl), ("distill", &self.distill.stage)] {
            stage
                .optimizer(0)
                .validate()
                .map_err(|e| at(name, e.to_string()))?;
        }
        if self.rl.rollout_n < 2 && self.rl.steps > 0 {
            return Err(at("rl", "rollout_n must be >= 2 for group-normalized rewards".into()));
        }
        let d = &self.distill;
        if d.estimator == EstimatorVariant::Grpo {
            return Err(at("distill", "grpo is not a distillation estimator".into()));
        }
        if !d.estimator.uses_lambda() && self.experiment == Experiment::LambdaSweep && d.lambdas.iter().any(|&l| l != 1.0)
        {
            return Err(at(
                "distill",
                format!("estimator {} ignores lambda; use gopd or gopd-full", d.estimator.name()),
            ));
        }
        if d.lambdas.iter().chain([&d.exopd_lambda]).any(|&l| l < 0.0) {
            return Err(at("distill", "lambda values must be >= 0".into()));
        }
        if d.multi_step_factor == 0 {
            return Err(at("distill", "multi_step_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocab {
        self.tasks[0].vocab
    }

    pub fn horizon(&self) -> usize {
        self.tasks[0].horizon
    }
}
