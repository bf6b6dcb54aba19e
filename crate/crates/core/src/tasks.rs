//! Synthetic verifiable tasks: modular sums and copy-reverse.
//!
//! Policies are tables keyed by [`PromptId`], so a prompt id names an *input*
//! (operands or payload) with the family in its high bits. Problems are
//! instances drawn i.i.d. from the finite input space; train and eval splits
//! are disjoint in instance ids.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{context_windows, Policy, PolicyKind, PromptId, Role, SequenceSpace, TokenId, Trajectory, Vocab};

/// Bits below the family tag in a prompt id.
pub const FAMILY_SHIFT: u32 = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    Modsum,
    CopyReverse,
}

impl TaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::Modsum => "modsum",
            TaskFamily::CopyReverse => "copy-reverse",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "modsum" => Some(TaskFamily::Modsum),
            "copy-reverse" => Some(TaskFamily::CopyReverse),
            _ => None,
        }
    }

    fn tag(self) -> u32 {
        match self {
            TaskFamily::Modsum => 1,
            TaskFamily::CopyReverse => 2,
        }
    }

    pub fn of_prompt(prompt: PromptId) -> Option<Self> {
        match prompt.0 >> FAMILY_SHIFT {
            1 => Some(TaskFamily::Modsum),
            2 => Some(TaskFamily::CopyReverse),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub vocab: Vocab,
    pub horizon: usize,
    /// Problems per split.
    pub num_prompts: usize,
    /// Operand count (modsum) or payload length (copy-reverse).
    pub difficulty: usize,
    /// Modulus (modsum) or payload alphabet size (copy-reverse); digits are the
    /// first `alphabet` non-EOS tokens.
    pub alphabet: usize,
    pub split_seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let symbols = self.vocab.size() - 1;
        if self.alphabet < 1 || self.alphabet > symbols {
            return Err(Error::EncodingOverflow(format!(
                "alphabet {} needs between 1 and {symbols} non-EOS tokens",
                self.alphabet
            )));
        }
        if self.difficulty == 0 {
            return Err(Error::InvalidConfig("difficulty must be positive".into()));
        }
        match self.family {
            TaskFamily::Modsum => {
                if self.horizon < 2 {
                    return Err(Error::EncodingOverflow(format!(
                        "modsum answer needs horizon >= 2, got {}",
                        self.horizon
                    )));
                }
            }
            TaskFamily::CopyReverse => {
                if self.difficulty + 1 > self.horizon {
                    return Err(Error::LengthOverflow {
                        length: self.difficulty,
                        horizon: self.horizon,
                    });
                }
            }
        }
        let size = self.input_space_size()?;
        if size >= 1u64 << FAMILY_SHIFT {
            return Err(Error::EncodingOverflow(format!("{size} inputs do not fit a prompt id")));
        }
        Ok(())
    }

    pub fn input_space_size(&self) -> Result<u64> {
        (self.alphabet as u64)
            .checked_pow(self.difficulty as u32)
            .ok_or_else(|| Error::EncodingOverflow("input space size overflows".into()))
    }

    fn digit(&self, d: usize) -> TokenId {
        self.vocab.symbol(d).expect("alphabet validated against the vocabulary")
    }

    /// Problem for the input with mixed-radix index `index`.
    pub fn problem(&self, instance: u64, index: u64) -> Result<Problem> {
        self.validate()?;
        let a = self.alphabet as u64;
        let mut digits = vec![0usize; self.difficulty];
        let mut rest = index;
        for d in digits.iter_mut().rev() {
            *d = (rest % a) as usize;
            rest /= a;
        }
        if rest != 0 {
            return Err(Error::EncodingOverflow(format!("input index {index} out of range")));
        }
        let rendering: Vec<TokenId> = digits.iter().map(|&d| self.digit(d)).collect();
        let mut target: Vec<TokenId> = match self.family {
            TaskFamily::Modsum => vec![self.digit(digits.iter().sum::<usize>() % self.alphabet)],
            TaskFamily::CopyReverse => rendering.iter().rev().copied().collect(),
        };
        target.push(self.vocab.eos());
        Ok(Problem {
            instance,
            prompt: PromptId((self.family.tag() << FAMILY_SHIFT) | index as u32),
            family: self.family,
            rendering,
            target,
        })
    }

    /// Problem for explicit operands or payload digits (indices into the alphabet).
    pub fn problem_for(&self, instance: u64, digits: &[usize]) -> Result<Problem> {
        if digits.len() != self.difficulty || digits.iter().any(|&d| d >= self.alphabet) {
            return Err(Error::EncodingOverflow(format!("digits {digits:?} do not fit the spec")));
        }
        let index = digits
            .iter()
            .fold(0u64, |acc, &d| acc * self.alphabet as u64 + d as u64);
        self.problem(instance, index)
    }

    /// One problem per input, instance id equal to the input index.
    pub fn all_inputs(&self) -> Result<Vec<Problem>> {
        let n = self.input_space_size()?;
        (0..n).map(|i| self.problem(i, i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub instance: u64,
    pub prompt: PromptId,
    pub family: TaskFamily,
    /// Prompt tokens: operands or payload.
    pub rendering: Vec<TokenId>,
    /// Exact expected response, EOS included.
    pub target: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    pub spec: TaskSpec,
    pub train: Vec<Problem>,
    pub eval: Vec<Problem>,
}

impl TaskSet {
    pub fn generate(spec: &TaskSpec) -> Result<Self> {
        spec.validate()?;
        let size = spec.input_space_size()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.split_seed);
        let n = spec.num_prompts as u64;
        let mut draw = |instance: u64| spec.problem(instance, rng.random_range(0..size));
        let train = (0..n).map(&mut draw).collect::<Result<Vec<_>>>()?;
        let eval = (n..2 * n).map(&mut draw).collect::<Result<Vec<_>>>()?;
        Ok(TaskSet {
            spec: spec.clone(),
            train,
            eval,
        })
    }

    pub fn train_prompts(&self) -> Vec<PromptId> {
        self.train.iter().map(|p| p.prompt).collect()
    }
}

fn expect_family(spec: &TaskSpec, family: TaskFamily) -> Result<()> {
    if spec.family != family {
        return Err(Error::InvalidConfig(format!(
            "expected a {} spec, got {}",
            family.name(),
            spec.family.name()
        )));
    }
    Ok(())
}

pub fn gen_modsum_task(spec: &TaskSpec) -> Result<TaskSet> {
    expect_family(spec, TaskFamily::Modsum)?;
    TaskSet::generate(spec)
}

pub fn gen_copy_reverse_task(spec: &TaskSpec) -> Result<TaskSet> {
    expect_family(spec, TaskFamily::CopyReverse)?;
    TaskSet::generate(spec)
}

/// Exact match of the whole response, EOS included.
pub fn verify(problem: &Problem, trajectory: &Trajectory) -> bool {
    trajectory.prompt == problem.prompt && trajectory.tokens == problem.target
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Tokens per response, EOS included.
    pub mean_length: f64,
    /// Nats per generated position.
    pub mean_entropy: f64,
}

/// Monte-Carlo evaluation with `samples_per_problem` responses per problem.
pub fn eval_policy(
    policy: &Policy,
    problems: &[Problem],
    samples_per_problem: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalResult> {
    if samples_per_problem == 0 {
        return Err(Error::InvalidConfig("samples_per_problem must be >= 1".into()));
    }
    if problems.is_empty() {
        return Err(Error::InvalidConfig("no problems to evaluate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    let mut tokens = 0usize;
    let mut entropy = 0.0;
    for problem in problems {
        for _ in 0..samples_per_problem {
            let traj = policy.sample(problem.prompt, horizon, &mut rng)?;
            if verify(problem, &traj) {
                correct += 1;
            }
            for (ctx, _) in traj.steps() {
                entropy += policy.token_entropy(problem.prompt, ctx)?;
            }
            tokens += traj.len();
        }
    }
    let n = (problems.len() * samples_per_problem) as f64;
    Ok(EvalResult {
        accuracy: correct as f64 / n,
        mean_length: tokens as f64 / n,
        mean_entropy: entropy / tokens as f64,
    })
}

#[derive(Clone, Copy, Debug)]
struct PromptMoments {
    expected_length: f64,
    expected_entropy: f64,
}

fn prompt_moments(policy: &Policy, space: &SequenceSpace, prompt: PromptId) -> Result<PromptMoments> {
    fn walk(
        policy: &Policy,
        space: &SequenceSpace,
        prompt: PromptId,
        prefix: &mut Vec<TokenId>,
        log_reach: f64,
        acc: &mut PromptMoments,
    ) -> Result<()> {
        let lp = policy.log_probs(prompt, prefix)?;
        let reach = log_reach.exp();
        acc.expected_length += reach;
        acc.expected_entropy += reach * crate::policy::entropy_of(&lp);
        if prefix.len() + 1 < space.horizon {
            for tok in space.vocab.symbols() {
                prefix.push(tok);
                walk(policy, space, prompt, prefix, log_reach + lp[tok as usize], acc)?;
                prefix.pop();
            }
        }
        Ok(())
    }
    if !space.is_feasible() {
        space.sequences()?;
    }
    let mut acc = PromptMoments {
        expected_length: 0.0,
        expected_entropy: 0.0,
    };
    walk(policy, space, prompt, &mut Vec::new(), 0.0, &mut acc)?;
    Ok(acc)
}

/// Exact evaluation by enumeration: accuracy is the probability of the target.
pub fn eval_policy_exact(policy: &Policy, problems: &[Problem], space: &SequenceSpace) -> Result<EvalResult> {
    if problems.is_empty() {
        return Err(Error::InvalidConfig("no problems to evaluate".into()));
    }
    let mut cache: BTreeMap<PromptId, PromptMoments> = BTreeMap::new();
    let mut accuracy = 0.0;
    let mut length = 0.0;
    let mut entropy = 0.0;
    for problem in problems {
        let m = match cache.get(&problem.prompt) {
            Some(m) => *m,
            None => {
                let m = prompt_moments(policy, space, problem.prompt)?;
                cache.insert(problem.prompt, m);
                m
            }
        };
        let target = Trajectory::new(problem.prompt, problem.target.clone());
        accuracy += policy.logprob_sequence(&target)?.exp();
        length += m.expected_length;
        entropy += m.expected_entropy;
    }
    let n = problems.len() as f64;
    Ok(EvalResult {
        accuracy: accuracy / n,
        mean_length: length / n,
        mean_entropy: entropy / length,
    })
}

/// How a synthetic pretrained base is drawn: Gaussian logit noise plus a
/// `skill` bonus on tokens that continue the correct answer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    pub order: usize,
    pub skill: f64,
    pub noise: f64,
    pub seed: u64,
}

/// Next tokens an order-`order` model would credit at `window`.
///
/// A window shorter than the order is the whole prefix, so only that position
/// counts. A full window may sit at any later position whose preceding tokens
/// match, and an order-limited model cannot tell those positions apart.
pub fn credited_tokens(target: &[TokenId], window: &[TokenId], order: usize) -> Vec<TokenId> {
    let mut out = Vec::new();
    if window.len() < order {
        let p = window.len();
        if p < target.len() && target[..p] == *window {
            out.push(target[p]);
        }
        return out;
    }
    for p in order..target.len() {
        if target[p - order..p] == *window && !out.contains(&target[p]) {
            out.push(target[p]);
        }
    }
    out
}

/// Trainable base policy with a slot for every reachable window of every
/// prompt in `problems`.
pub fn build_base_policy(
    vocab: Vocab,
    horizon: usize,
    problems: &[Problem],
    profile: &SkillProfile,
    role: Role,
) -> Result<Policy> {
    if !(profile.noise.is_finite() && profile.noise >= 0.0 && profile.skill.is_finite()) {
        return Err(Error::InvalidConfig("skill and noise must be finite, noise >= 0".into()));
    }
    let normal = Normal::new(0.0, profile.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut targets: BTreeMap<PromptId, &[TokenId]> = BTreeMap::new();
    for p in problems {
        targets.entry(p.prompt).or_insert(&p.target);
    }
    let windows = context_windows(vocab, profile.order, horizon);
    let mut policy = Policy::new(vocab, profile.order, PolicyKind::SoftmaxTrainable, role);
    for (&prompt, target) in &targets {
        for window in &windows {
            let mut logits: Vec<f64> = (0..vocab.size()).map(|_| normal.sample(&mut rng)).collect();
            for tok in credited_tokens(target, window, profile.order) {
                logits[tok as usize] += profile.skill;
            }
            policy.insert(prompt, window.clone(), logits)?;
        }
    }
    Ok(policy)
}

/// One JSON object per problem.
pub fn write_task_dump<W: Write>(mut out: W, problems: &[Problem]) -> std::io::Result<()> {
    for p in problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
