//! Training loops: GRPO-lite teachers, G-OPD / ExOPD distillation, SFT, and
//! ExPO weight extrapolation.
//!
//! Every trainer owns a [`TrainState`] and advances it one step at a time so
//! a harness can log between steps and checkpoint anywhere.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::TrainState;
use crate::error::{Error, Result};
use crate::estimators::{
    accumulate_policy_gradient, gopd_advantages_from_rewards, grpo_advantages, policy_gradient, AdvantageVector,
    Averaging, Direction, EstimatorVariant,
};
use crate::optim::OptimizerConfig;
use crate::policy::{Policy, PromptId, Role, SequenceSpace, Trajectory};
use crate::rewards::{implicit_from_logprobs, ReferenceRole, RewardSpec, TokenRewardVector};
use crate::tasks::{verify, Problem};

/// ExOPD's reward scale.
pub const EXOPD_LAMBDA: f64 = 1.25;

/// Prompts of one data domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPool {
    pub domain: String,
    pub prompts: Vec<PromptId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSpec {
    pub domain: String,
    pub teacher: Policy,
    /// The teacher's pre-RL base, needed for teacher-base references and correction.
    pub teacher_base: Option<Policy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub lambda: f64,
    pub estimator: EstimatorVariant,
    pub reference_role: ReferenceRole,
    pub correction: bool,
    pub teachers: Vec<TeacherSpec>,
    pub horizon: usize,
    pub averaging: Averaging,
    /// Replace sampled batches with exact expectations over every response.
    pub exact: bool,
}

impl DistillConfig {
    pub fn single(teacher: TeacherSpec, lambda: f64, estimator: EstimatorVariant, horizon: usize) -> Self {
        DistillConfig {
            lambda,
            estimator,
            reference_role: ReferenceRole::StudentBase,
            correction: false,
            teachers: vec![teacher],
            horizon,
            averaging: Averaging::PerTrajectory,
            exact: false,
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            lambda: self.lambda,
            reference_role: self.reference_role,
            correction: self.correction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.teachers.is_empty() {
            return Err(Error::InvalidConfig("at least one teacher is required".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.teachers {
            if !seen.insert(t.domain.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate teacher domain `{}`", t.domain)));
            }
            self.reward_spec().validate(t.teacher_base.is_some())?;
        }
        match self.estimator {
            EstimatorVariant::Grpo => {
                return Err(Error::InvalidConfig("grpo is not a distillation estimator".into()))
            }
            EstimatorVariant::OpdFull | EstimatorVariant::OpdD0 if self.lambda != 1.0 => {
                return Err(Error::InvalidConfig(format!(
                    "estimator {:?} ignores lambda; use gopd or gopd-full for lambda {}",
                    self.estimator, self.lambda
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-step batch composition across domains.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pools: Vec<DomainPool>,
    batch: usize,
    seed: u64,
}

impl Schedule {
    pub fn new(pools: Vec<DomainPool>, batch: usize, seed: u64) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::InvalidConfig("no prompt pools".into()));
        }
        if batch == 0 {
            return Err(Error::InvalidConfig("batch must be positive".into()));
        }
        if let Some(p) = pools.iter().find(|p| p.prompts.is_empty()) {
            return Err(Error::EmptyDomainPool(p.domain.clone()));
        }
        Ok(Schedule { pools, batch, seed })
    }

    pub fn pools(&self) -> &[DomainPool] {
        &self.pools
    }

    /// Prompts per domain at `step`. Leftover slots go to consecutive domains
    /// starting at `step mod D`.
    pub fn counts(&self, step: u64) -> Vec<usize> {
        let d = self.pools.len();
        let mut counts = vec![self.batch / d; d];
        let start = (step % d as u64) as usize;
        for j in 0..self.batch % d {
            counts[(start + j) % d] += 1;
        }
        counts
    }

    /// `(prompt, domain index)` pairs for `step`, domain-major.
    pub fn assignment(&self, step: u64) -> Vec<(PromptId, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step.wrapping_add(1));
        let mut out = Vec::with_capacity(self.batch);
        for (d, count) in self.counts(step).into_iter().enumerate() {
            let pool = &self.pools[d].prompts;
            for _ in 0..count {
                out.push((pool[rng.random_range(0..pool.len())], d));
            }
        }
        out
    }
}

/// Orders `pools` like the config's teachers so domain index = teacher index.
fn pools_for_teachers(config: &DistillConfig, pools: Vec<DomainPool>) -> Result<Vec<DomainPool>> {
    let mut by_domain: BTreeMap<String, DomainPool> = BTreeMap::new();
    for p in pools {
        if by_domain.contains_key(&p.domain) {
            return Err(Error::InvalidConfig(format!("duplicate prompt pool `{}`", p.domain)));
        }
        by_domain.insert(p.domain.clone(), p);
    }
    let ordered = config
        .teachers
        .iter()
        .map(|t| {
            by_domain
                .remove(&t.domain)
                .ok_or_else(|| Error::EmptyDomainPool(t.domain.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = by_domain.keys().next() {
        return Err(Error::InvalidConfig(format!("prompt pool `{extra}` has no teacher")));
    }
    Ok(ordered)
}

/// Multi-teacher schedule: equal per-domain counts, each prompt paired with its
/// domain's teacher (the returned domain index is the teacher index).
pub fn multi_teacher_schedule(
    config: &DistillConfig,
    pools: Vec<DomainPool>,
    batch_prompts: usize,
    seed: u64,
) -> Result<Schedule> {
    if config.teachers.len() < 2 {
        return Err(Error::InvalidConfig("multi-teacher schedule needs at least 2 teachers".into()));
    }
    Schedule::new(pools_for_teachers(config, pools)?, batch_prompts, seed)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Step count after the update.
    pub step: u64,
    /// Mean per-response objective (maximized form for distillation).
    pub objective: f64,
    pub train_reward: f64,
    pub mean_length: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub grad_norm: f64,
    pub trajectories: usize,
}

fn as_student(policy: &Policy) -> Result<Policy> {
    Ok(policy.clone().into_trainable().with_role(Role::Student))
}

fn norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// G-OPD distillation; covers OPD (`λ = 1`) and ExOPD (`λ > 1`).
pub struct GopdTrainer {
    config: DistillConfig,
    optimizer: OptimizerConfig,
    schedule: Schedule,
    student_base: Policy,
    pub state: TrainState,
}

/// Advantages and rewards of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSignals {
    pub advantages: AdvantageVector,
    pub rewards: TokenRewardVector,
    /// `log π_θ(y|x) − log π*(y|x) − (λ−1) Σ r_t`, the per-response loss.
    pub loss: f64,
}

impl GopdTrainer {
    pub fn new(
        student_init: &Policy,
        config: DistillConfig,
        optimizer: OptimizerConfig,
        pools: Vec<DomainPool>,
    ) -> Result<Self> {
        let state = TrainState::new(as_student(student_init)?, &optimizer);
        GopdTrainer::resume(state, student_init, config, optimizer, pools)
    }

    /// Continues from `state`; `student_init` supplies the student-base reference.
    pub fn resume(
        state: TrainState,
        student_init: &Policy,
        config: DistillConfig,
        optimizer: OptimizerConfig,
        pools: Vec<DomainPool>,
    ) -> Result<Self> {
        config.validate()?;
        optimizer.validate()?;
        let schedule = Schedule::new(pools_for_teachers(&config, pools)?, optimizer.batch_prompts, optimizer.seed)?;
        Ok(GopdTrainer {
            student_base: student_init.snapshot(Role::StudentBase),
            config,
            optimizer,
            schedule,
            state,
        })
    }

    pub fn config(&self) -> &DistillConfig {
        &self.config
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn student(&self) -> &Policy {
        &self.state.student
    }

    pub fn student_base(&self) -> &Policy {
        &self.student_base
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.optimizer.steps
    }

    /// The policy implicit rewards are measured against for `teacher`.
    pub fn reference(&self, teacher: usize) -> &Policy {
        match self.config.reference_role {
            ReferenceRole::StudentBase => &self.student_base,
            ReferenceRole::TeacherBase => self.config.teachers[teacher]
                .teacher_base
                .as_ref()
                .expect("validated: teacher-base reference has a base"),
        }
    }

    /// Implicit rewards, with correction applied when configured.
    pub fn rewards(&self, teacher: usize, trajectory: &Trajectory) -> Result<TokenRewardVector> {
        let spec = &self.config.teachers[teacher];
        let lt = spec.teacher.token_logprobs(trajectory)?;
        let lr = self.reference(teacher).token_logprobs(trajectory)?;
        let rewards = implicit_from_logprobs(&lt, &lr);
        if !self.config.correction {
            return Ok(rewards);
        }
        let base = spec
            .teacher_base
            .as_ref()
            .expect("validated: correction has a teacher base");
        crate::rewards::reward_correction(&rewards, &self.student_base, base, trajectory)
    }

    pub fn signals(&self, teacher: usize, trajectory: &Trajectory) -> Result<TokenSignals> {
        let ls = self.state.student.token_logprobs(trajectory)?;
        let lt = self.config.teachers[teacher].teacher.token_logprobs(trajectory)?;
        let rewards = self.rewards(teacher, trajectory)?;
        let lambda = self.config.lambda;
        let advantages = gopd_advantages_from_rewards(&ls, &lt, &rewards, lambda, self.config.estimator)?;
        let mut loss = 0.0;
        for t in 0..ls.len() {
            loss += (ls[t] - lt[t]) - (lambda - 1.0) * rewards.values[t];
        }
        Ok(TokenSignals {
            advantages,
            rewards,
            loss,
        })
    }

    pub fn step(&mut self) -> Result<StepStats> {
        if self.config.exact {
            self.exact_step()
        } else {
            self.sampled_step()
        }
    }

    fn sampled_step(&mut self) -> Result<StepStats> {
        let batch = self.schedule.assignment(self.state.step);
        let horizon = self.config.horizon;
        let mut trajectories = Vec::new();
        let mut owners = Vec::new();
        {
            let TrainState { student, rng, .. } = &mut self.state;
            for &(prompt, teacher) in &batch {
                for _ in 0..self.optimizer.rollout_n {
                    trajectories.push(student.sample_expanding(prompt, horizon, rng)?);
                    owners.push(teacher);
                }
            }
        }
        self.state.trajectories_consumed += trajectories.len() as u64;

        let mut advantages = Vec::with_capacity(trajectories.len());
        let mut stats = StepStats {
            reward_min: f64::INFINITY,
            reward_max: f64::NEG_INFINITY,
            trajectories: trajectories.len(),
            ..Default::default()
        };
        for (traj, &teacher) in trajectories.iter().zip(&owners) {
            let s = self.signals(teacher, traj)?;
            stats.objective -= s.loss;
            stats.train_reward += s.rewards.total();
            stats.mean_length += traj.len() as f64;
            if let Some((lo, hi)) = s.rewards.min_max() {
                stats.reward_min = stats.reward_min.min(lo);
                stats.reward_max = stats.reward_max.max(hi);
            }
            advantages.push(s.advantages);
        }
        let n = trajectories.len() as f64;
        stats.objective /= n;
        stats.train_reward /= n;
        stats.mean_length /= n;

        let grad = policy_gradient(
            &self.state.student,
            &trajectories,
            &advantages,
            Direction::Minimize,
            self.config.averaging,
        )?;
        stats.grad_norm = grad.norm();
        self.state.apply(&grad.0)?;
        stats.step = self.state.step;
        Ok(stats)
    }

    /// Prompt weights for exact mode: domains weigh equally, prompts within a
    /// domain by their multiplicity in the pool.
    fn exact_weights(&self) -> Vec<(PromptId, usize, f64)> {
        let d = self.schedule.pools().len() as f64;
        let mut out = Vec::new();
        for (teacher, pool) in self.schedule.pools().iter().enumerate() {
            let mut counts: BTreeMap<PromptId, usize> = BTreeMap::new();
            for &p in &pool.prompts {
                *counts.entry(p).or_default() += 1;
            }
            let total = pool.prompts.len() as f64;
            for (p, c) in counts {
                out.push((p, teacher, c as f64 / total / d));
            }
        }
        out
    }

    fn exact_step(&mut self) -> Result<StepStats> {
        let space = SequenceSpace::new(self.state.student.vocab(), self.config.horizon);
        let weights = self.exact_weights();
        let prefixes = space.open_prefixes()?;
        for &(prompt, _, _) in &weights {
            for prefix in &prefixes {
                self.state.student.ensure_context(prompt, prefix)?;
            }
        }
        let mut grad = vec![0.0; self.state.student.num_params()];
        let mut stats = StepStats {
            reward_min: f64::INFINITY,
            reward_max: f64::NEG_INFINITY,
            ..Default::default()
        };
        for &(prompt, teacher, w) in &weights {
            for traj in space.trajectories(prompt)? {
                let p = self.state.student.logprob_sequence(&traj)?.exp();
                let s = self.signals(teacher, &traj)?;
                accumulate_policy_gradient(&self.state.student, &traj, &s.advantages.values, w * p, &mut grad)?;
                stats.objective -= w * p * s.loss;
                stats.train_reward += w * p * s.rewards.total();
                stats.mean_length += w * p * traj.len() as f64;
                if let Some((lo, hi)) = s.rewards.min_max() {
                    stats.reward_min = stats.reward_min.min(lo);
                    stats.reward_max = stats.reward_max.max(hi);
                }
                stats.trajectories += 1;
            }
        }
        stats.grad_norm = norm(&grad);
        self.state.apply(&grad)?;
        stats.step = self.state.step;
        Ok(stats)
    }

    /// Exact expected per-response objective of the current student, averaged
    /// over `prompts` (teacher index per prompt).
    pub fn expected_objective(&self, prompts: &[(PromptId, usize)]) -> Result<f64> {
        let space = SequenceSpace::new(self.state.student.vocab(), self.config.horizon);
        let student = self.state.student.snapshot(Role::Student);
        let mut total = 0.0;
        for &(prompt, teacher) in prompts {
            for traj in space.trajectories(prompt)? {
                let p = student.logprob_sequence(&traj)?.exp();
                if p == 0.0 {
                    continue;
                }
                let lt = self.config.teachers[teacher].teacher.token_logprobs(&traj)?;
                let ls = student.token_logprobs(&traj)?;
                let r = self.rewards(teacher, &traj)?;
                let mut loss = 0.0;
                for t in 0..ls.len() {
                    loss += (ls[t] - lt[t]) - (self.config.lambda - 1.0) * r.values[t];
                }
                total -= p * loss;
            }
        }
        Ok(total / prompts.len().max(1) as f64)
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_student(self) -> Policy {
        self.state.student
    }
}

pub fn train_gopd(
    student_init: &Policy,
    config: DistillConfig,
    optimizer: OptimizerConfig,
    pools: Vec<DomainPool>,
) -> Result<Policy> {
    let mut trainer = GopdTrainer::new(student_init, config, optimizer, pools)?;
    trainer.run()?;
    Ok(trainer.into_student())
}

/// GRPO-lite on sparse outcome rewards.
pub struct RlTrainer {
    problems: Vec<Problem>,
    horizon: usize,
    optimizer: OptimizerConfig,
    pub state: TrainState,
}

impl RlTrainer {
    pub fn new(base: &Policy, problems: Vec<Problem>, horizon: usize, optimizer: OptimizerConfig) -> Result<Self> {
        optimizer.validate()?;
        if optimizer.rollout_n < 2 {
            return Err(Error::GroupTooSmall(optimizer.rollout_n));
        }
        if problems.is_empty() {
            return Err(Error::EmptyDomainPool("rl".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        Ok(RlTrainer {
            state: TrainState::new(as_student(base)?, &optimizer),
            problems,
            horizon,
            optimizer,
        })
    }

    pub fn resume(state: TrainState, problems: Vec<Problem>, horizon: usize, optimizer: OptimizerConfig) -> Result<Self> {
        let mut t = RlTrainer::new(&state.student, problems, horizon, optimizer)?;
        t.state = state;
        Ok(t)
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.optimizer.steps
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let mut pick = ChaCha8Rng::seed_from_u64(self.optimizer.seed);
        pick.set_stream(self.state.step.wrapping_add(1));
        let batch: Vec<usize> = (0..self.optimizer.batch_prompts)
            .map(|_| pick.random_range(0..self.problems.len()))
            .collect();

        let mut trajectories = Vec::new();
        let mut advantages = Vec::new();
        let mut stats = StepStats {
            reward_min: f64::INFINITY,
            reward_max: f64::NEG_INFINITY,
            ..Default::default()
        };
        for &i in &batch {
            let problem = &self.problems[i];
            let mut group = Vec::with_capacity(self.optimizer.rollout_n);
            {
                let TrainState { student, rng, .. } = &mut self.state;
                for _ in 0..self.optimizer.rollout_n {
                    group.push(student.sample_expanding(problem.prompt, self.horizon, rng)?);
                }
            }
            let rewards: Vec<f64> = group
                .iter()
                .map(|t| crate::rewards::sparse_outcome_reward(verify(problem, t), t).total())
                .collect();
            for (r, t) in rewards.iter().zip(&group) {
                stats.train_reward += r;
                stats.mean_length += t.len() as f64;
                stats.reward_min = stats.reward_min.min(*r);
                stats.reward_max = stats.reward_max.max(*r);
            }
            advantages.extend(grpo_advantages(&rewards, &group)?);
            trajectories.extend(group);
        }
        self.state.trajectories_consumed += trajectories.len() as u64;
        let n = trajectories.len() as f64;
        stats.train_reward /= n;
        stats.mean_length /= n;
        stats.objective = stats.train_reward;
        stats.trajectories = trajectories.len();

        let grad = policy_gradient(
            &self.state.student,
            &trajectories,
            &advantages,
            Direction::Maximize,
            Averaging::PerTrajectory,
        )?;
        stats.grad_norm = grad.norm();
        self.state.apply(&grad.0)?;
        stats.step = self.state.step;
        Ok(stats)
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// The trained policy, frozen as a teacher.
    pub fn into_teacher(self) -> Policy {
        self.state.student.into_frozen().with_role(Role::Teacher)
    }
}

pub fn train_rl_teacher(
    base: &Policy,
    problems: &[Problem],
    horizon: usize,
    config: &OptimizerConfig,
) -> Result<Policy> {
    let mut trainer = RlTrainer::new(base, problems.to_vec(), horizon, config.clone())?;
    trainer.run()?;
    Ok(trainer.into_teacher())
}

/// Cross-entropy on teacher samples, scheduled like distillation.
pub struct SftTrainer {
    teachers: Vec<TeacherSpec>,
    horizon: usize,
    optimizer: OptimizerConfig,
    schedule: Schedule,
    averaging: Averaging,
    pub state: TrainState,
}

impl SftTrainer {
    pub fn new(
        student_init: &Policy,
        config: &DistillConfig,
        optimizer: OptimizerConfig,
        pools: Vec<DomainPool>,
    ) -> Result<Self> {
        optimizer.validate()?;
        if config.teachers.is_empty() {
            return Err(Error::InvalidConfig("at least one teacher is required".into()));
        }
        let schedule = Schedule::new(pools_for_teachers(config, pools)?, optimizer.batch_prompts, optimizer.seed)?;
        Ok(SftTrainer {
            teachers: config.teachers.clone(),
            horizon: config.horizon,
            averaging: config.averaging,
            state: TrainState::new(as_student(student_init)?, &optimizer),
            optimizer,
            schedule,
        })
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.optimizer.steps
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let batch = self.schedule.assignment(self.state.step);
        let mut trajectories = Vec::new();
        for &(prompt, teacher) in &batch {
            for _ in 0..self.optimizer.rollout_n {
                let traj = self.teachers[teacher]
                    .teacher
                    .sample(prompt, self.horizon, &mut self.state.rng)?;
                for (ctx, _) in traj.steps() {
                    self.state.student.ensure_context(prompt, ctx)?;
                }
                trajectories.push(traj);
            }
        }
        self.state.trajectories_consumed += trajectories.len() as u64;
        let mut stats = StepStats {
            trajectories: trajectories.len(),
            ..Default::default()
        };
        let mut advantages = Vec::with_capacity(trajectories.len());
        for traj in &trajectories {
            stats.train_reward += self.state.student.logprob_sequence(traj)?;
            stats.mean_length += traj.len() as f64;
            advantages.push(AdvantageVector {
                values: vec![1.0; traj.len()],
                variant: EstimatorVariant::OpdD0,
            });
        }
        let n = trajectories.len() as f64;
        stats.train_reward /= n;
        stats.mean_length /= n;
        stats.objective = stats.train_reward;
        stats.reward_min = stats.train_reward;
        stats.reward_max = stats.train_reward;
        let grad = policy_gradient(
            &self.state.student,
            &trajectories,
            &advantages,
            Direction::Maximize,
            self.averaging,
        )?;
        stats.grad_norm = grad.norm();
        self.state.apply(&grad.0)?;
        stats.step = self.state.step;
        Ok(stats)
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_student(self) -> Policy {
        self.state.student
    }
}

pub fn train_sft(
    student_init: &Policy,
    config: &DistillConfig,
    optimizer: OptimizerConfig,
    pools: Vec<DomainPool>,
) -> Result<Policy> {
    let mut trainer = SftTrainer::new(student_init, config, optimizer, pools)?;
    trainer.run()?;
    Ok(trainer.into_student())
}

/// `θ_avg + α (θ_avg − θ_student)` with `θ_avg` the mean teacher parameters.
pub fn expo_extrapolate(teachers: &[&Policy], student: &Policy, alpha: f64) -> Result<Policy> {
    if teachers.is_empty() {
        return Err(Error::InvalidConfig("expo needs at least one teacher".into()));
    }
    for t in teachers {
        if !t.same_layout(student) {
            return Err(Error::LayoutMismatch(
                "teacher and student parameter layouts differ".into(),
            ));
        }
    }
    let k = teachers.len() as f64;
    let theta_s = student.params();
    let params: Vec<f64> = (0..theta_s.len())
        .map(|i| {
            let mut sum = 0.0;
            for t in teachers {
                sum += t.params()[i];
            }
            let avg = sum / k;
            avg + alpha * (avg - theta_s[i])
        })
        .collect();
    student.with_params(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Vocab;

    fn pool(name: &str, ids: &[u32]) -> DomainPool {
        DomainPool {
            domain: name.into(),
            prompts: ids.iter().map(|&i| PromptId(i)).collect(),
        }
    }

    #[test]
    fn schedule_split_rules() {
        let s = Schedule::new(vec![pool("a", &[1, 2]), pool("b", &[3])], 8, 0).unwrap();
        assert_eq!(s.counts(0), vec![4, 4]);
        let odd = Schedule::new(vec![pool("a", &[1, 2]), pool("b", &[3])], 9, 0).unwrap();
        assert_eq!(odd.counts(0), vec![5, 4]);
        assert_eq!(odd.counts(1), vec![4, 5]);
        assert_eq!(odd.assignment(3), odd.assignment(3));
        let a = odd.assignment(2);
        assert!(a.iter().all(|&(p, d)| (d == 0) == (p.0 < 3)));
        assert!(matches!(
            Schedule::new(vec![pool("a", &[1]), pool("empty", &[])], 4, 0),
            Err(Error::EmptyDomainPool(_))
        ));
    }

    #[test]
    fn expo_arithmetic() {
        let v = Vocab::new(2, 1).unwrap();
        let base = Policy::uniform(v, 0, 1, &[PromptId(0)], Role::Student).unwrap();
        let s = base.with_params(vec![1.0, 2.0]).unwrap();
        let t1 = base.with_params(vec![3.0, -1.0]).unwrap();
        let t2 = base.with_params(vec![5.0, 1.0]).unwrap();
        let plain = expo_extrapolate(&[&t1, &t2], &s, 0.0).unwrap();
        assert_eq!(plain.params(), &[4.0, 0.0]);
        let ext = expo_extrapolate(&[&t1, &t2], &s, 0.5).unwrap();
        assert_eq!(ext.params(), &[5.5, -1.0]);
        assert_eq!(expo_extrapolate(&[&s], &s, 3.0).unwrap().params(), s.params());
        let other = Policy::uniform(v, 1, 2, &[PromptId(0)], Role::Student).unwrap();
        assert!(matches!(expo_extrapolate(&[&other], &s, 0.5), Err(Error::LayoutMismatch(_))));
    }
}
