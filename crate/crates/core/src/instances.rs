//! Random tabular instances for property checks and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::policy::{context_windows, Policy, PromptId, Role, Vocab};

/// Trainable policy with `N(0, scale²)` logits in every reachable window.
pub fn random_policy<R: Rng + ?Sized>(
    vocab: Vocab,
    order: usize,
    horizon: usize,
    prompts: &[PromptId],
    scale: f64,
    role: Role,
    rng: &mut R,
) -> Result<Policy> {
    let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let windows = context_windows(vocab, order, horizon);
    let mut policy = Policy::new(vocab, order, crate::policy::PolicyKind::SoftmaxTrainable, role);
    for &prompt in prompts {
        for w in &windows {
            let logits = (0..vocab.size()).map(|_| normal.sample(rng)).collect();
            policy.insert(prompt, w.clone(), logits)?;
        }
    }
    Ok(policy)
}

/// A small random problem: vocab and horizon drawn from the given ranges,
/// plus full-prefix student, teacher and reference policies on one prompt.
#[derive(Clone, Debug)]
pub struct Instance {
    pub vocab: Vocab,
    pub horizon: usize,
    pub prompt: PromptId,
    pub student: Policy,
    pub teacher: Policy,
    pub reference: Policy,
}

pub fn random_instance(seed: u64, max_vocab: usize, max_horizon: usize, scale: f64) -> Result<Instance> {
    if max_vocab < 2 || max_horizon < 1 {
        return Err(Error::InvalidConfig("need max_vocab >= 2 and max_horizon >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(2..=max_vocab);
    let eos = rng.random_range(0..size) as u32;
    let vocab = Vocab::new(size, eos)?;
    let horizon = rng.random_range(1..=max_horizon);
    let prompt = PromptId(rng.random_range(0..1000));
    let order = horizon;
    let student = random_policy(vocab, order, horizon, &[prompt], scale, Role::Student, &mut rng)?;
    let teacher = random_policy(vocab, order, horizon, &[prompt], scale, Role::Teacher, &mut rng)?.into_frozen();
    let reference = random_policy(vocab, order, horizon, &[prompt], scale, Role::Reference, &mut rng)?.into_frozen();
    Ok(Instance {
        vocab,
        horizon,
        prompt,
        student,
        teacher,
        reference,
    })
}
