#![allow(dead_code)]

use opdlab_core::instances::{random_instance, Instance};
use opdlab_core::{Policy, SequenceSpace, Trajectory};

pub fn instance(seed: u64) -> Instance {
    random_instance(seed, 3, 3, 1.0).unwrap()
}

pub fn space(inst: &Instance) -> SequenceSpace {
    SequenceSpace::new(inst.vocab, inst.horizon)
}

/// `Σ_y p(y)` by direct enumeration, summing exp of left-to-right token sums.
pub fn total_mass(policy: &Policy, trajs: &[Trajectory]) -> f64 {
    trajs
        .iter()
        .map(|t| {
            let mut lp = 0.0;
            for (ctx, tok) in t.steps() {
                lp += policy.logprob_token(t.prompt, ctx, tok).unwrap();
            }
            lp.exp()
        })
        .sum()
}

/// Two-class softmax probability of the first class, computed by hand.
pub fn softmax2(a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (b - a).exp())
}
