//! Per-token advantages and policy-gradient estimators, with exact oracles.
//!
//! Sign convention: every advantage in the OPD family is written in the
//! minimization form `log π_θ − log π* + …`, and [`policy_gradient`] returns the
//! gradient of a *loss*. Trainers always apply `θ ← θ − lr · g`. With
//! [`Direction::Minimize`] the loss gradient is `Σ A_t ∇ log π_θ(y_t)`; with
//! [`Direction::Maximize`] (rewards, GRPO, SFT likelihood) it is the negation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{softmax, Policy, PromptId, SequenceSpace, TokenId, Trajectory};
use crate::rewards::TokenRewardVector;

/// Floor on the group standard deviation in GRPO normalization.
pub const GRPO_STD_EPS: f64 = 1e-8;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    /// Suffix-sum of `log π_θ − log π*` (unbiased reverse-KL gradient).
    OpdFull,
    /// Discount 0: only the current token's log ratio.
    OpdD0,
    /// Discount-0 G-OPD advantage.
    Gopd,
    /// Suffix-sum of the G-OPD per-token terms; unbiased for the G-OPD objective.
    GopdFull,
    Grpo,
}

impl EstimatorVariant {
    pub fn is_full(self) -> bool {
        matches!(self, EstimatorVariant::OpdFull | EstimatorVariant::GopdFull)
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, EstimatorVariant::Gopd | EstimatorVariant::GopdFull)
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorVariant::OpdFull => "opd-full",
            EstimatorVariant::OpdD0 => "opd-d0",
            EstimatorVariant::Gopd => "gopd",
            EstimatorVariant::GopdFull => "gopd-full",
            EstimatorVariant::Grpo => "grpo",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            EstimatorVariant::OpdFull,
            EstimatorVariant::OpdD0,
            EstimatorVariant::Gopd,
            EstimatorVariant::GopdFull,
            EstimatorVariant::Grpo,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub variant: EstimatorVariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    #[default]
    PerTrajectory,
    PerToken,
}

/// Dense gradient aligned with a policy's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        GradientVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, c: f64) {
        for x in &mut self.0 {
            *x *= c;
        }
    }

    /// `self += c · other`, zero-extending `self` if `other` is longer.
    pub fn add_scaled(&mut self, other: &GradientVector, c: f64) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), 0.0);
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    /// `‖self − other‖ / max(‖other‖, tiny)`.
    pub fn relative_error(&self, other: &GradientVector) -> f64 {
        let diff: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / other.norm().max(1e-300)
    }
}

/// `out[t] = Σ_{t' ≥ t} xs[t']`.
pub fn suffix_sums(xs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    let mut acc = 0.0;
    for t in (0..xs.len()).rev() {
        acc += xs[t];
        out[t] = acc;
    }
    out
}

fn log_ratio(student: &[f64], teacher: &[f64]) -> Vec<f64> {
    student.iter().zip(teacher).map(|(s, t)| s - t).collect()
}

pub fn opd_advantages_discount0(student: &Policy, teacher: &Policy, trajectory: &Trajectory) -> Result<AdvantageVector> {
    let ls = student.token_logprobs(trajectory)?;
    let lt = teacher.token_logprobs(trajectory)?;
    Ok(AdvantageVector {
        values: log_ratio(&ls, &lt),
        variant: EstimatorVariant::OpdD0,
    })
}

pub fn opd_advantages_full(student: &Policy, teacher: &Policy, trajectory: &Trajectory) -> Result<AdvantageVector> {
    let d0 = opd_advantages_discount0(student, teacher, trajectory)?;
    Ok(AdvantageVector {
        values: suffix_sums(&d0.values),
        variant: EstimatorVariant::OpdFull,
    })
}

fn gopd_terms(ls: &[f64], lt: &[f64], lr: &[f64], lambda: f64) -> Vec<f64> {
    ls.iter()
        .zip(lt)
        .zip(lr)
        .map(|((s, t), r)| (s - t) + (lambda - 1.0) * (r - t))
        .collect()
}

/// `A_t = (log π_θ − log π*) + (λ − 1)(log π_ref − log π*)` at each token.
pub fn gopd_advantages(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    trajectory: &Trajectory,
) -> Result<AdvantageVector> {
    let ls = student.token_logprobs(trajectory)?;
    let lt = teacher.token_logprobs(trajectory)?;
    let lr = reference.token_logprobs(trajectory)?;
    Ok(AdvantageVector {
        values: gopd_terms(&ls, &lt, &lr, lambda),
        variant: EstimatorVariant::Gopd,
    })
}

pub fn gopd_advantages_full(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    trajectory: &Trajectory,
) -> Result<AdvantageVector> {
    let d0 = gopd_advantages(student, teacher, reference, lambda, trajectory)?;
    Ok(AdvantageVector {
        values: suffix_sums(&d0.values),
        variant: EstimatorVariant::GopdFull,
    })
}

/// G-OPD advantages from precomputed log-probabilities and implicit rewards:
/// `A_t = (log π_θ − log π*) − (λ − 1) r_t`. This is how trainers consume
/// (possibly corrected) reward vectors.
pub fn gopd_advantages_from_rewards(
    student_logprobs: &[f64],
    teacher_logprobs: &[f64],
    rewards: &TokenRewardVector,
    lambda: f64,
    variant: EstimatorVariant,
) -> Result<AdvantageVector> {
    let n = student_logprobs.len();
    if teacher_logprobs.len() != n || rewards.len() != n {
        return Err(Error::ShapeMismatch("log-prob and reward lengths differ".into()));
    }
    let terms: Vec<f64> = match variant {
        EstimatorVariant::OpdD0 | EstimatorVariant::OpdFull => log_ratio(student_logprobs, teacher_logprobs),
        EstimatorVariant::Gopd | EstimatorVariant::GopdFull => student_logprobs
            .iter()
            .zip(teacher_logprobs)
            .zip(&rewards.values)
            .map(|((s, t), r)| (s - t) - (lambda - 1.0) * r)
            .collect(),
        EstimatorVariant::Grpo => {
            return Err(Error::InvalidConfig("grpo advantages come from group rewards".into()))
        }
    };
    let values = if variant.is_full() { suffix_sums(&terms) } else { terms };
    Ok(AdvantageVector { values, variant })
}

/// Group-normalized scores `(r_i − mean) / max(std, ε)`; exactly zero when all
/// rewards are equal.
pub fn grpo_scores(rewards: &[f64]) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64;
    let std = var.sqrt().max(GRPO_STD_EPS);
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Broadcasts each trajectory's group score to all of its tokens.
pub fn grpo_advantages(rewards: &[f64], trajectories: &[Trajectory]) -> Result<Vec<AdvantageVector>> {
    if rewards.len() != trajectories.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rewards for {} trajectories",
            rewards.len(),
            trajectories.len()
        )));
    }
    let scores = grpo_scores(rewards)?;
    Ok(scores
        .into_iter()
        .zip(trajectories)
        .map(|(s, t)| AdvantageVector {
            values: vec![s; t.len()],
            variant: EstimatorVariant::Grpo,
        })
        .collect())
}

/// `grad[slot] += weight · (onehot(token) − softmax(logits[slot]))`.
fn accumulate_score(
    student: &Policy,
    prompt: PromptId,
    context: &[TokenId],
    token: TokenId,
    weight: f64,
    grad: &mut [f64],
) -> Result<()> {
    let slot = student.slot(prompt, context).ok_or_else(|| Error::MissingContext {
        prompt,
        context: student.window(context).to_vec(),
    })?;
    let v = student.vocab().size();
    let probs = softmax(student.slot_logits(slot));
    let g = &mut grad[slot * v..(slot + 1) * v];
    for (j, p) in probs.into_iter().enumerate() {
        let indicator = if j == token as usize { 1.0 } else { 0.0 };
        g[j] += weight * (indicator - p);
    }
    Ok(())
}

/// Adds `weight · Σ_t A_t ∇ log π_θ(y_t | ·)` for one trajectory into `grad`.
pub fn accumulate_policy_gradient(
    student: &Policy,
    trajectory: &Trajectory,
    advantages: &[f64],
    weight: f64,
    grad: &mut [f64],
) -> Result<()> {
    if advantages.len() != trajectory.len() {
        return Err(Error::ShapeMismatch(format!(
            "advantage length {} for trajectory of length {}",
            advantages.len(),
            trajectory.len()
        )));
    }
    if grad.len() != student.num_params() {
        return Err(Error::LayoutMismatch(format!(
            "gradient buffer of length {} for {} parameters",
            grad.len(),
            student.num_params()
        )));
    }
    for ((ctx, tok), &a) in trajectory.steps().zip(advantages) {
        accumulate_score(student, trajectory.prompt, ctx, tok, weight * a, grad)?;
    }
    Ok(())
}

/// `Σ_i Σ_t A_t ∇ log π_θ(y_t | ·)`, averaged over trajectories (or tokens),
/// returned as a loss gradient under the given direction.
pub fn policy_gradient(
    student: &Policy,
    trajectories: &[Trajectory],
    advantages: &[AdvantageVector],
    direction: Direction,
    averaging: Averaging,
) -> Result<GradientVector> {
    if trajectories.len() != advantages.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} trajectories but {} advantage vectors",
            trajectories.len(),
            advantages.len()
        )));
    }
    let mut grad = vec![0.0; student.num_params()];
    let sign = match direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut tokens = 0usize;
    for (traj, adv) in trajectories.iter().zip(advantages) {
        accumulate_policy_gradient(student, traj, &adv.values, sign, &mut grad)?;
        tokens += traj.len();
    }
    let denom = match averaging {
        Averaging::PerTrajectory => trajectories.len(),
        Averaging::PerToken => tokens,
    };
    if denom > 0 {
        let inv = 1.0 / denom as f64;
        for g in &mut grad {
            *g *= inv;
        }
    }
    Ok(GradientVector(grad))
}

/// What the student is being distilled towards.
#[derive(Clone, Copy, Debug)]
pub struct DistillTarget<'a> {
    pub teacher: &'a Policy,
    pub reference: &'a Policy,
    pub lambda: f64,
}

/// Advantages of one trajectory under a variant.
pub fn advantages_for(
    student: &Policy,
    target: DistillTarget<'_>,
    variant: EstimatorVariant,
    trajectory: &Trajectory,
) -> Result<AdvantageVector> {
    match variant {
        EstimatorVariant::OpdFull => opd_advantages_full(student, target.teacher, trajectory),
        EstimatorVariant::OpdD0 => opd_advantages_discount0(student, target.teacher, trajectory),
        EstimatorVariant::Gopd => {
            gopd_advantages(student, target.teacher, target.reference, target.lambda, trajectory)
        }
        EstimatorVariant::GopdFull => {
            gopd_advantages_full(student, target.teacher, target.reference, target.lambda, trajectory)
        }
        EstimatorVariant::Grpo => Err(Error::InvalidConfig(
            "grpo has no per-trajectory expectation oracle".into(),
        )),
    }
}

/// Exact expectation `Σ_y π_θ(y) Σ_t A_t(y) ∇ log π_θ(y_t | ·)` over every response,
/// as a loss gradient.
pub fn expected_gradient(
    student: &Policy,
    target: DistillTarget<'_>,
    variant: EstimatorVariant,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<GradientVector> {
    let mut grad = vec![0.0; student.num_params()];
    for traj in space.trajectories(prompt)? {
        let weight = student.logprob_sequence(&traj)?.exp();
        if weight == 0.0 {
            continue;
        }
        let adv = advantages_for(student, target, variant, &traj)?;
        for ((ctx, tok), a) in traj.steps().zip(adv.values) {
            accumulate_score(student, prompt, ctx, tok, weight * a, &mut grad)?;
        }
    }
    Ok(GradientVector(grad))
}

pub fn expected_gradient_oracle(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    variant: EstimatorVariant,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<GradientVector> {
    expected_gradient(
        student,
        DistillTarget {
            teacher,
            reference,
            lambda,
        },
        variant,
        space,
        prompt,
    )
}

/// One dropped term of the full OPD gradient: the expectation of
/// `Δ_{earlier} · ∇ log π_θ(y_{later})` with `earlier < later`.
#[derive(Clone, Debug)]
pub struct CrossTerm {
    pub earlier: usize,
    pub later: usize,
    pub expectation: GradientVector,
}

pub fn cross_term_expectations(
    student: &Policy,
    teacher: &Policy,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<Vec<CrossTerm>> {
    let n = student.num_params();
    let mut terms: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for later in 1..space.horizon {
        for earlier in 0..later {
            terms.insert((earlier, later), vec![0.0; n]);
        }
    }
    for traj in space.trajectories(prompt)? {
        let weight = student.logprob_sequence(&traj)?.exp();
        let delta = opd_advantages_discount0(student, teacher, &traj)?.values;
        let steps: Vec<_> = traj.steps().collect();
        for (later, &(ctx, tok)) in steps.iter().enumerate() {
            for (earlier, d) in delta.iter().enumerate().take(later) {
                let g = terms.get_mut(&(earlier, later)).expect("pair allocated above");
                accumulate_score(student, prompt, ctx, tok, weight * d, g)?;
            }
        }
    }
    Ok(terms
        .into_iter()
        .map(|((earlier, later), g)| CrossTerm {
            earlier,
            later,
            expectation: GradientVector(g),
        })
        .collect())
}

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` per coordinate.
pub fn finite_difference_gradient<F>(mut objective: F, params: &[f64], step: f64) -> Result<GradientVector>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step {step} must be > 0")));
    }
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = objective(&x)?;
        x[i] = orig - step;
        let down = objective(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(GradientVector(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{PolicyKind, Role, Vocab};

    fn bandit(probs: &[f64]) -> Policy {
        let v = Vocab::new(probs.len(), (probs.len() - 1) as TokenId).unwrap();
        let mut p = Policy::new(v, 0, PolicyKind::SoftmaxTrainable, Role::Student);
        p.insert(PromptId(0), vec![], probs.iter().map(|x| x.ln()).collect())
            .unwrap();
        p
    }

    #[test]
    fn d0_value_and_sign() {
        let s = bandit(&[0.5, 0.5]);
        let t = bandit(&[0.8, 0.2]);
        let traj = Trajectory::new(PromptId(0), vec![1]);
        let a = opd_advantages_discount0(&s, &t, &traj).unwrap().values[0];
        assert!((a - (0.5f64.ln() - 0.2f64.ln())).abs() < 1e-15);
        assert!((a - 0.9163).abs() < 1e-4);
        // student overweights token 1 relative to the teacher
        assert!(a > 0.0);
    }

    #[test]
    fn zero_when_student_is_teacher() {
        let s = bandit(&[0.3, 0.7]);
        let traj = Trajectory::new(PromptId(0), vec![0, 0, 1]);
        assert_eq!(opd_advantages_full(&s, &s, &traj).unwrap().values, vec![0.0; 3]);
        assert_eq!(opd_advantages_discount0(&s, &s, &traj).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn suffix_sum_matches_naive() {
        let xs = [0.3, -1.2, 0.7, 2.0];
        let s = suffix_sums(&xs);
        for t in 0..xs.len() {
            let naive: f64 = xs[t..].iter().sum();
            assert!((s[t] - naive).abs() < 1e-15);
        }
        assert!((s[0] - (s[1] + xs[0])).abs() < 1e-15);
    }

    #[test]
    fn full_equals_d0_at_length_one() {
        let s = bandit(&[0.4, 0.6]);
        let t = bandit(&[0.9, 0.1]);
        let traj = Trajectory::new(PromptId(0), vec![1]);
        assert_eq!(
            opd_advantages_full(&s, &t, &traj).unwrap().values,
            opd_advantages_discount0(&s, &t, &traj).unwrap().values
        );
    }

    #[test]
    fn gopd_reductions() {
        let s = bandit(&[0.4, 0.35, 0.25]);
        let t = bandit(&[0.7, 0.2, 0.1]);
        let r = bandit(&[0.2, 0.3, 0.5]);
        let traj = Trajectory::new(PromptId(0), vec![0, 1, 2]);
        let d0 = opd_advantages_discount0(&s, &t, &traj).unwrap().values;
        let at_one = gopd_advantages(&s, &t, &r, 1.0, &traj).unwrap().values;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&at_one), bits(&d0));
        assert_eq!(gopd_advantages(&s, &t, &t, 1.7, &traj).unwrap().values, d0);
        let ext = gopd_advantages(&s, &t, &r, 1.25, &traj).unwrap().values;
        let lr = r.token_logprobs(&traj).unwrap();
        let lt = t.token_logprobs(&traj).unwrap();
        for i in 0..3 {
            let other = d0[i] + 0.25 * (lr[i] - lt[i]);
            assert!((ext[i] - other).abs() < 1e-14);
        }
    }

    #[test]
    fn grpo_examples() {
        assert_eq!(grpo_scores(&[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(grpo_scores(&[1.0, 1.0, 0.0, 0.0]).unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(grpo_scores(&[0.1, 0.1, 0.1]).unwrap(), vec![0.0; 3]);
        assert!(matches!(grpo_scores(&[1.0]), Err(Error::GroupTooSmall(1))));
        let trajs = vec![
            Trajectory::new(PromptId(0), vec![0, 1]),
            Trajectory::new(PromptId(0), vec![1]),
        ];
        let adv = grpo_advantages(&[1.0, 0.0], &trajs).unwrap();
        assert_eq!(adv[0].values, vec![1.0, 1.0]);
        assert_eq!(adv[1].values, vec![-1.0]);
    }

    #[test]
    fn score_function_closed_form() {
        let s = bandit(&[0.2, 0.5, 0.3]);
        let traj = Trajectory::new(PromptId(0), vec![1]);
        let adv = AdvantageVector {
            values: vec![0.7],
            variant: EstimatorVariant::OpdD0,
        };
        let g = policy_gradient(&s, &[traj], &[adv], Direction::Minimize, Averaging::PerTrajectory).unwrap();
        let p = [0.2, 0.5, 0.3];
        for j in 0..3 {
            let onehot = if j == 1 { 1.0 } else { 0.0 };
            assert!((g.0[j] - 0.7 * (onehot - p[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_linearity_and_zero() {
        let s = bandit(&[0.2, 0.5, 0.3]);
        let trajs = vec![
            Trajectory::new(PromptId(0), vec![0, 2]),
            Trajectory::new(PromptId(0), vec![1, 1, 2]),
        ];
        let adv = |scale: f64| {
            vec![
                AdvantageVector { values: vec![0.3 * scale, -0.1 * scale], variant: EstimatorVariant::Gopd },
                AdvantageVector { values: vec![1.0 * scale, 0.2 * scale, -0.6 * scale], variant: EstimatorVariant::Gopd },
            ]
        };
        let g1 = policy_gradient(&s, &trajs, &adv(1.0), Direction::Minimize, Averaging::PerTrajectory).unwrap();
        let g2 = policy_gradient(&s, &trajs, &adv(2.0), Direction::Minimize, Averaging::PerTrajectory).unwrap();
        for (a, b) in g1.0.iter().zip(&g2.0) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        let g0 = policy_gradient(&s, &trajs, &adv(0.0), Direction::Minimize, Averaging::PerTrajectory).unwrap();
        assert_eq!(g0.max_abs(), 0.0);
        let gm = policy_gradient(&s, &trajs, &adv(1.0), Direction::Maximize, Averaging::PerTrajectory).unwrap();
        for (a, b) in g1.0.iter().zip(&gm.0) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn shape_mismatch() {
        let s = bandit(&[0.5, 0.5]);
        let traj = Trajectory::new(PromptId(0), vec![0, 1]);
        let adv = AdvantageVector { values: vec![1.0], variant: EstimatorVariant::OpdD0 };
        assert!(policy_gradient(&s, std::slice::from_ref(&traj), &[adv], Direction::Minimize, Averaging::PerTrajectory).is_err());
        assert!(policy_gradient(&s, &[traj], &[], Direction::Minimize, Averaging::PerTrajectory).is_err());
    }

    #[test]
    fn fd_on_simple_objectives() {
        let theta = [0.5, -1.5, 2.0];
        let g = finite_difference_gradient(|x| Ok(x.iter().map(|v| v * v).sum::<f64>() / 2.0), &theta, 1e-4).unwrap();
        for (a, b) in g.0.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-8);
        }
        let c = [3.0, -0.25, 1.0];
        let lin = finite_difference_gradient(|x| Ok(x.iter().zip(&c).map(|(a, b)| a * b).sum()), &theta, 1e-6).unwrap();
        for (a, b) in lin.0.iter().zip(&c) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(finite_difference_gradient(|_| Ok(f64::NAN), &theta, 1e-6).is_err());
        assert!(finite_difference_gradient(|_| Ok(0.0), &theta, 0.0).is_err());
    }
}
