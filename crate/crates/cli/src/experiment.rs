//! Experiment orchestration: per-seed teachers, then independent arms, each
//! writing only to its own directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/<name>[-k]/
//!   config.cfg
//!   seed-<s>/<arm>/{metrics.csv, arm.json, final.ckpt}
//!   summary.json
//!   plots/*.svg
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use opdlab_core::rewards::ReferenceRole;
use opdlab_core::tasks::{build_base_policy, eval_policy, eval_policy_exact};
use opdlab_core::trainers::{expo_extrapolate, GopdTrainer, RlTrainer, SftTrainer};
use opdlab_core::{
    exact_reverse_kl, DistillConfig, DomainPool, EstimatorVariant, Policy, Problem, Role, SequenceSpace, SkillProfile,
    StepStats, TaskSet, TeacherSpec, TrainState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, RunConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{self, MetricsRow};

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_root: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub enum_cap: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmKind {
    Base,
    Teacher,
    Gopd,
    Sft,
    Expo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub accuracy: f64,
    pub mean_length: f64,
    pub mean_entropy: f64,
    pub kl_to_teacher: f64,
    pub exact_kl: bool,
}

/// Contents of `arm.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub arm: String,
    pub kind: ArmKind,
    pub experiment: Experiment,
    pub seed: u64,
    pub domains: Vec<String>,
    pub lambda: Option<f64>,
    pub estimator: Option<EstimatorVariant>,
    pub reference: Option<ReferenceRole>,
    pub correction: bool,
    pub steps: u64,
    pub trajectories: u64,
    pub final_metrics: BTreeMap<String, FinalMetrics>,
}

#[derive(Clone, Debug)]
enum ArmPlan {
    Base,
    Gopd {
        name: String,
        domains: Vec<usize>,
        lambda: f64,
        reference: ReferenceRole,
        correction: bool,
        steps: u64,
    },
    Sft {
        name: String,
        domains: Vec<usize>,
        steps: u64,
    },
    Expo {
        name: String,
        alpha: f64,
    },
}

impl ArmPlan {
    fn name(&self) -> String {
        match self {
            ArmPlan::Base => "base".into(),
            ArmPlan::Gopd { name, .. } | ArmPlan::Sft { name, .. } | ArmPlan::Expo { name, .. } => name.clone(),
        }
    }
}

fn lambda_label(lambda: f64) -> String {
    format!("lambda-{lambda}")
}

fn plan_arms(config: &RunConfig) -> Vec<ArmPlan> {
    let d = &config.distill;
    let all: Vec<usize> = (0..config.tasks.len()).collect();
    let gopd = |name: String, domains: Vec<usize>, lambda, reference, correction, steps| ArmPlan::Gopd {
        name,
        domains,
        lambda,
        reference,
        correction,
        steps,
    };
    let steps = d.stage.steps;
    let mut arms = vec![ArmPlan::Base];
    match config.experiment {
        Experiment::RlTeacher => {}
        Experiment::LambdaSweep => {
            for (i, task) in config.tasks.iter().enumerate() {
                for &lambda in &d.lambdas {
                    let name = format!("{}-{}", task.family.name(), lambda_label(lambda));
                    arms.push(gopd(name, vec![i], lambda, ReferenceRole::StudentBase, false, steps));
                }
            }
        }
        Experiment::MultiTeacher => {
            let multi = steps * d.multi_step_factor;
            arms.push(gopd("multi-opd".into(), all.clone(), 1.0, ReferenceRole::StudentBase, false, multi));
            arms.push(gopd("multi-exopd".into(), all.clone(), d.exopd_lambda, ReferenceRole::StudentBase, false, multi));
            arms.push(ArmPlan::Sft {
                name: "multi-sft".into(),
                domains: all,
                steps: multi,
            });
            arms.push(ArmPlan::Expo {
                name: "expo".into(),
                alpha: d.expo_alpha,
            });
        }
        Experiment::StrongToWeak => {
            arms.push(gopd("opd".into(), vec![0], 1.0, ReferenceRole::StudentBase, false, steps));
            arms.push(gopd("exopd".into(), vec![0], d.exopd_lambda, ReferenceRole::StudentBase, false, steps));
            arms.push(gopd("exopd-teacher-base".into(), vec![0], d.exopd_lambda, ReferenceRole::TeacherBase, false, steps));
            arms.push(ArmPlan::Sft {
                name: "sft".into(),
                domains: vec![0],
                steps,
            });
        }
        Experiment::RewardCorrectionAb => {
            let lambda = d.exopd_lambda;
            arms.push(gopd("reference-student-base".into(), vec![0], lambda, ReferenceRole::StudentBase, false, steps));
            arms.push(gopd("reward-correction".into(), vec![0], lambda, ReferenceRole::StudentBase, true, steps));
        }
    }
    arms
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every item ran"))
        .collect()
}

/// Everything shared by the arms of one seed.
struct SeedContext {
    seed: u64,
    sets: Vec<TaskSet>,
    student_base: Policy,
    teacher_base: Option<Policy>,
    teachers: Vec<Policy>,
}

impl SeedContext {
    fn domain(&self, i: usize) -> &str {
        self.sets[i].spec.family.name()
    }

    fn pools(&self, domains: &[usize]) -> Vec<DomainPool> {
        domains
            .iter()
            .map(|&i| DomainPool {
                domain: self.domain(i).to_string(),
                prompts: self.sets[i].train_prompts(),
            })
            .collect()
    }

    fn teacher_specs(&self, domains: &[usize]) -> Vec<TeacherSpec> {
        domains
            .iter()
            .map(|&i| TeacherSpec {
                domain: self.domain(i).to_string(),
                teacher: self.teachers[i].clone(),
                teacher_base: self.teacher_base.as_ref().map(|b| b.snapshot(Role::TeacherBase)),
            })
            .collect()
    }
}

/// Evaluation of one policy on one domain's held-out problems.
struct Evaluator<'a> {
    config: &'a RunConfig,
    space: SequenceSpace,
}

impl<'a> Evaluator<'a> {
    fn new(config: &'a RunConfig, enum_cap: u64) -> Self {
        Evaluator {
            config,
            space: SequenceSpace::new(config.vocab(), config.horizon()).with_cap(enum_cap),
        }
    }

    fn exact(&self) -> bool {
        self.space.is_feasible()
    }

    fn stream(seed: u64, step: u64, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(step);
        rng
    }

    fn kl(&self, policy: &Policy, teacher: &Policy, problems: &[Problem], seed: u64, step: u64) -> opdlab_core::Result<f64> {
        if self.exact() {
            let mut cache: BTreeMap<_, f64> = BTreeMap::new();
            let mut total = 0.0;
            for p in problems {
                let kl = match cache.get(&p.prompt) {
                    Some(&kl) => kl,
                    None => {
                        let kl = exact_reverse_kl(policy, teacher, &self.space, p.prompt)?;
                        cache.insert(p.prompt, kl);
                        kl
                    }
                };
                total += kl;
            }
            return Ok(total / problems.len() as f64);
        }
        let mut rng = Evaluator::stream(seed, step, 2);
        let n = self.config.kl_samples;
        let mut total = 0.0;
        for i in 0..n {
            let p = &problems[i % problems.len()];
            let t = policy.sample(p.prompt, self.config.horizon(), &mut rng)?;
            total += policy.logprob_sequence(&t)? - teacher.logprob_sequence(&t)?;
        }
        Ok(total / n as f64)
    }

    fn row(
        &self,
        policy: &Policy,
        teacher: &Policy,
        set: &TaskSet,
        seed: u64,
        step: u64,
        stats: Option<&StepStats>,
    ) -> opdlab_core::Result<MetricsRow> {
        let eval = if self.exact() {
            eval_policy_exact(policy, &set.eval, &self.space)?
        } else {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(step);
            eval_policy(policy, &set.eval, self.config.eval_samples, self.config.horizon(), s)?
        };
        Ok(MetricsRow {
            step,
            domain: set.spec.family.name().to_string(),
            objective: stats.map_or(0.0, |s| s.objective),
            train_reward: stats.map_or(0.0, |s| s.train_reward),
            eval_accuracy: eval.accuracy,
            mean_length: eval.mean_length,
            mean_entropy: eval.mean_entropy,
            kl_to_teacher: self.kl(policy, teacher, &set.eval, seed, step)?,
            exact_kl: self.exact(),
        })
    }
}

/// Output of one arm before it is written.
struct ArmOutput {
    record: ArmRecord,
    rows: Vec<MetricsRow>,
    checkpoint: String,
}

fn arm_error(arm: &str, seed: u64, source: opdlab_core::Error) -> HarnessError {
    HarnessError::Arm {
        arm: arm.to_string(),
        seed,
        source,
    }
}

fn final_metrics(rows: &[MetricsRow]) -> BTreeMap<String, FinalMetrics> {
    let mut out = BTreeMap::new();
    for r in rows {
        out.insert(
            r.domain.clone(),
            FinalMetrics {
                accuracy: r.eval_accuracy,
                mean_length: r.mean_length,
                mean_entropy: r.mean_entropy,
                kl_to_teacher: r.kl_to_teacher,
                exact_kl: r.exact_kl,
            },
        );
    }
    out
}

fn should_log(step: u64, every: u64, done: bool) -> bool {
    done || step.is_multiple_of(every)
}

/// Artifacts written next to a failure so the run can be inspected or resumed.
struct Failure {
    error: HarnessError,
    checkpoint: Option<String>,
}

impl From<HarnessError> for Failure {
    fn from(error: HarnessError) -> Self {
        Failure {
            error,
            checkpoint: None,
        }
    }
}

fn failed(arm: &str, seed: u64, state: &TrainState, e: opdlab_core::Error) -> Failure {
    let checkpoint = match &e {
        opdlab_core::Error::TrainingAborted { checkpoint, .. } => checkpoint.as_ref().clone(),
        _ => state.to_checkpoint(),
    };
    Failure {
        error: arm_error(arm, seed, e),
        checkpoint: Some(checkpoint),
    }
}

fn train_teacher(
    config: &RunConfig,
    eval: &Evaluator<'_>,
    ctx_seed: u64,
    set: &TaskSet,
    base: &Policy,
) -> std::result::Result<(Policy, ArmOutput), Failure> {
    let name = format!("teacher-{}", set.spec.family.name());
    let opt = config.rl.optimizer(ctx_seed);
    let mut rl = RlTrainer::new(base, set.train.clone(), config.horizon(), opt)
        .map_err(|e| Failure::from(arm_error(&name, ctx_seed, e)))?;
    let mut snapshots: Vec<(StepStats, Policy)> = Vec::new();
    while !rl.is_done() {
        let stats = rl.step().map_err(|e| failed(&name, ctx_seed, &rl.state, e))?;
        if should_log(stats.step, config.log_every, rl.is_done()) {
            snapshots.push((stats, rl.state.student.snapshot(Role::Teacher)));
        }
    }
    let checkpoint = rl.state.to_checkpoint();
    let trajectories = rl.state.trajectories_consumed;
    let teacher = rl.into_teacher();
    let mut rows = Vec::new();
    if snapshots.is_empty() {
        rows.push(eval.row(&teacher, &teacher, set, ctx_seed, 0, None).map_err(|e| Failure::from(HarnessError::from(e)))?);
    }
    for (stats, policy) in &snapshots {
        let row = eval
            .row(policy, &teacher, set, ctx_seed, stats.step, Some(stats))
            .map_err(|e| Failure::from(arm_error(&name, ctx_seed, e)))?;
        rows.push(row);
    }
    let record = ArmRecord {
        arm: name,
        kind: ArmKind::Teacher,
        experiment: config.experiment,
        seed: ctx_seed,
        domains: vec![set.spec.family.name().to_string()],
        lambda: None,
        estimator: Some(EstimatorVariant::Grpo),
        reference: None,
        correction: false,
        steps: config.rl.steps,
        trajectories,
        final_metrics: final_metrics(&rows),
    };
    Ok((
        teacher,
        ArmOutput {
            record,
            rows,
            checkpoint,
        },
    ))
}

fn build_bases(config: &RunConfig, sets: &[TaskSet], seed: u64) -> opdlab_core::Result<(Policy, Option<Policy>)> {
    let mut problems: Vec<Problem> = Vec::new();
    for s in sets {
        problems.extend(s.train.iter().cloned());
        problems.extend(s.eval.iter().cloned());
    }
    let shifted = |p: &SkillProfile| SkillProfile {
        seed: p.seed.wrapping_add(seed),
        ..*p
    };
    let (vocab, horizon) = (config.vocab(), config.horizon());
    let student = build_base_policy(vocab, horizon, &problems, &shifted(&config.base), Role::StudentBase)?;
    let teacher = match &config.teacher_base {
        Some(p) => Some(build_base_policy(vocab, horizon, &problems, &shifted(p), Role::TeacherBase)?),
        None => None,
    };
    Ok((student, teacher))
}

fn write_arm(dir: &Path, out: &ArmOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    metrics::write(&dir.join("metrics.csv"), &out.rows)?;
    let json = serde_json::to_string_pretty(&out.record).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let path = dir.join("arm.json");
    std::fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))?;
    let path = dir.join("final.ckpt");
    std::fs::write(&path, &out.checkpoint).map_err(|e| HarnessError::io(&path, e))
}

fn write_failure(dir: &Path, failure: &Failure) {
    if let Some(ckpt) = &failure.checkpoint {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("failed.ckpt"), ckpt);
        }
    }
}

fn prepare_seed(
    config: &RunConfig,
    eval: &Evaluator<'_>,
    run_dir: &Path,
    seed: u64,
) -> std::result::Result<SeedContext, Failure> {
    let sets = config
        .tasks
        .iter()
        .map(TaskSet::generate)
        .collect::<opdlab_core::Result<Vec<_>>>()
        .map_err(|e| Failure::from(HarnessError::from(e)))?;
    let (student_base, teacher_base) =
        build_bases(config, &sets, seed).map_err(|e| Failure::from(HarnessError::from(e)))?;
    let rl_base = teacher_base.as_ref().unwrap_or(&student_base);
    let seed_dir = run_dir.join(format!("seed-{seed}"));
    let mut teachers = Vec::new();
    for set in &sets {
        let name = format!("teacher-{}", set.spec.family.name());
        match train_teacher(config, eval, seed, set, rl_base) {
            Ok((teacher, out)) => {
                write_arm(&seed_dir.join(&name), &out)?;
                teachers.push(teacher);
            }
            Err(f) => {
                write_failure(&seed_dir.join(&name), &f);
                return Err(f);
            }
        }
    }
    Ok(SeedContext {
        seed,
        sets,
        student_base,
        teacher_base,
        teachers,
    })
}

fn run_arm(config: &RunConfig, eval: &Evaluator<'_>, ctx: &SeedContext, plan: &ArmPlan) -> std::result::Result<ArmOutput, Failure> {
    let seed = ctx.seed;
    let name = plan.name();
    let d = &config.distill;
    let rows_for = |policy: &Policy, domains: &[usize], step: u64, stats: Option<&StepStats>| {
        domains
            .iter()
            .map(|&i| eval.row(policy, &ctx.teachers[i], &ctx.sets[i], seed, step, stats))
            .collect::<opdlab_core::Result<Vec<_>>>()
    };
    let all: Vec<usize> = (0..ctx.sets.len()).collect();
    let domain_names = |domains: &[usize]| domains.iter().map(|&i| ctx.domain(i).to_string()).collect::<Vec<_>>();
    let mut record = ArmRecord {
        arm: name.clone(),
        kind: ArmKind::Base,
        experiment: config.experiment,
        seed,
        domains: domain_names(&all),
        lambda: None,
        estimator: None,
        reference: None,
        correction: false,
        steps: 0,
        trajectories: 0,
        final_metrics: BTreeMap::new(),
    };
    let untrained = |policy: &Policy| TrainState::new(policy.clone(), &d.stage.optimizer(seed)).to_checkpoint();
    let (rows, checkpoint) = match plan {
        ArmPlan::Base => {
            let rows = rows_for(&ctx.student_base, &all, 0, None).map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            (rows, untrained(&ctx.student_base))
        }
        ArmPlan::Expo { alpha, .. } => {
            record.kind = ArmKind::Expo;
            let teachers: Vec<&Policy> = ctx.teachers.iter().collect();
            let policy = expo_extrapolate(&teachers, &ctx.student_base, *alpha)
                .map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            let rows = rows_for(&policy, &all, 0, None).map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            (rows, untrained(&policy))
        }
        ArmPlan::Gopd {
            domains,
            lambda,
            reference,
            correction,
            steps,
            ..
        } => {
            let mut dc = DistillConfig {
                lambda: *lambda,
                estimator: d.estimator,
                reference_role: *reference,
                correction: *correction,
                teachers: ctx.teacher_specs(domains),
                horizon: config.horizon(),
                averaging: d.averaging,
                exact: d.exact,
            };
            if !dc.estimator.uses_lambda() && *lambda != 1.0 {
                dc.estimator = match dc.estimator {
                    EstimatorVariant::OpdFull => EstimatorVariant::GopdFull,
                    _ => EstimatorVariant::Gopd,
                };
            }
            record.kind = ArmKind::Gopd;
            record.domains = domain_names(domains);
            record.lambda = Some(*lambda);
            record.estimator = Some(dc.estimator);
            record.reference = Some(*reference);
            record.correction = *correction;
            record.steps = *steps;
            let opt = crate::config::StageConfig {
                steps: *steps,
                ..d.stage
            }
            .optimizer(seed);
            let mut trainer = GopdTrainer::new(&ctx.student_base, dc, opt, ctx.pools(domains))
                .map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            let mut rows = Vec::new();
            if *steps == 0 {
                rows = rows_for(trainer.student(), domains, 0, None).map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            }
            while !trainer.is_done() {
                let stats = trainer.step().map_err(|e| failed(&name, seed, &trainer.state, e))?;
                if should_log(stats.step, config.log_every, trainer.is_done()) {
                    let new = rows_for(trainer.student(), domains, stats.step, Some(&stats))
                        .map_err(|e| failed(&name, seed, &trainer.state, e))?;
                    rows.extend(new);
                }
            }
            record.trajectories = trainer.state.trajectories_consumed;
            (rows, trainer.state.to_checkpoint())
        }
        ArmPlan::Sft { domains, steps, .. } => {
            record.kind = ArmKind::Sft;
            record.domains = domain_names(domains);
            record.steps = *steps;
            let dc = DistillConfig {
                lambda: 1.0,
                estimator: EstimatorVariant::Gopd,
                reference_role: ReferenceRole::StudentBase,
                correction: false,
                teachers: ctx.teacher_specs(domains),
                horizon: config.horizon(),
                averaging: d.averaging,
                exact: false,
            };
            let opt = crate::config::StageConfig {
                steps: *steps,
                ..d.stage
            }
            .optimizer(seed);
            let mut trainer = SftTrainer::new(&ctx.student_base, &dc, opt, ctx.pools(domains))
                .map_err(|e| Failure::from(arm_error(&name, seed, e)))?;
            let mut rows = Vec::new();
            while !trainer.is_done() {
                let stats = trainer.step().map_err(|e| failed(&name, seed, &trainer.state, e))?;
                if should_log(stats.step, config.log_every, trainer.is_done()) {
                    let new = rows_for(&trainer.state.student, domains, stats.step, Some(&stats))
                        .map_err(|e| failed(&name, seed, &trainer.state, e))?;
                    rows.extend(new);
                }
            }
            record.trajectories = trainer.state.trajectories_consumed;
            (rows, trainer.state.to_checkpoint())
        }
    };
    record.final_metrics = final_metrics(&rows);
    Ok(ArmOutput {
        record,
        rows,
        checkpoint,
    })
}

/// Picks `<root>/<name>`, or the first free `<root>/<name>-k`, and creates it.
pub fn fresh_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    for k in 0.. {
        let dir = if k == 0 {
            root.join(name)
        } else {
            root.join(format!("{name}-{k}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(HarnessError::io(&dir, e)),
        }
    }
    unreachable!("the suffix search only stops by returning")
}

#[derive(Debug)]
pub struct RunReport {
    pub run_dir: PathBuf,
    pub records: Vec<ArmRecord>,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Applies command-line overrides to a parsed config.
pub fn apply_options(mut config: RunConfig, options: &RunOptions) -> RunConfig {
    if let Some(seeds) = &options.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(jobs) = options.jobs {
        config.jobs = jobs.max(1);
    }
    if let Some(cap) = options.enum_cap {
        config.enum_cap = cap;
    }
    if let Some(out) = &options.out_root {
        config.out = Some(out.clone());
    }
    config
}

/// Runs every arm of every seed under a fresh run directory. Arm failures are
/// collected in the report; only setup problems return `Err`.
pub fn run_experiment(config: &RunConfig, config_text: &str) -> Result<RunReport> {
    let root = config.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let run_dir = fresh_run_dir(&root, &config.name)?;
    let cfg_path = run_dir.join("config.cfg");
    std::fs::write(&cfg_path, config_text).map_err(|e| HarnessError::io(&cfg_path, e))?;
    let eval = Evaluator::new(config, config.enum_cap);
    let mut failures = Vec::new();

    let prepared = parallel_map(&config.seeds, config.jobs, |&seed| prepare_seed(config, &eval, &run_dir, seed));
    let mut contexts = Vec::new();
    for r in prepared {
        match r {
            Ok(ctx) => contexts.push(ctx),
            Err(f) => failures.push(f.error.to_string()),
        }
    }

    let plans = plan_arms(config);
    let jobs: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|c| (0..plans.len()).map(move |a| (c, a)))
        .collect();
    let outcomes = parallel_map(&jobs, config.jobs, |&(c, a)| {
        let ctx = &contexts[c];
        let dir = run_dir.join(format!("seed-{}", ctx.seed)).join(plans[a].name());
        match run_arm(config, &eval, ctx, &plans[a]) {
            Ok(out) => write_arm(&dir, &out).map(|_| out.record).map_err(Failure::from),
            Err(f) => {
                write_failure(&dir, &f);
                Err(f)
            }
        }
    });

    let mut records = Vec::new();
    for ctx in &contexts {
        for set in &ctx.sets {
            let path = run_dir
                .join(format!("seed-{}", ctx.seed))
                .join(format!("teacher-{}", set.spec.family.name()))
                .join("arm.json");
            records.push(read_record(&path)?);
        }
    }
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f.error.to_string()),
        }
    }
    Ok(RunReport {
        run_dir,
        records,
        failures,
    })
}

pub fn read_record(path: &Path) -> Result<ArmRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
