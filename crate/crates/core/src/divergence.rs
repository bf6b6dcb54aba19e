//! Exact objectives and distances by enumerating the whole response space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{logsumexp, Policy, PolicyKind, PromptId, Role, SequenceSpace, TokenId, Trajectory};

/// Probabilities below `1e-300` count as outside the support.
pub const SUPPORT_FLOOR: f64 = 1e-300;

fn support_floor_ln() -> f64 {
    SUPPORT_FLOOR.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveForm {
    /// Reverse KL to the teacher, minimized.
    Opd,
    /// `E[λ log π*/π_ref] − KL(π_θ ‖ π_ref)`, maximized.
    GopdForm1,
    /// `E[(λ−1) log π*/π_ref] − KL(π_θ ‖ π*)`, maximized.
    GopdForm2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
    pub form: ObjectiveForm,
    pub lambda: f64,
}

/// Every response under `prompt` with its log-probability under `policy`.
pub fn sequence_logprobs(
    policy: &Policy,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<Vec<(Trajectory, f64)>> {
    space
        .trajectories(prompt)?
        .into_iter()
        .map(|t| {
            let lp = policy.logprob_sequence(&t)?;
            Ok((t, lp))
        })
        .collect()
}

fn check_support(name: &str, lp: f64, traj: &Trajectory) -> Result<()> {
    if lp < support_floor_ln() || lp.is_nan() {
        return Err(Error::SupportMismatch(format!(
            "{name} assigns probability below {SUPPORT_FLOOR:e} to {:?} (prompt {})",
            traj.tokens, traj.prompt
        )));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ_y p(y) [log p(y) − log q(y)]`.
pub fn exact_reverse_kl(p: &Policy, q: &Policy, space: &SequenceSpace, prompt: PromptId) -> Result<f64> {
    let mut total = 0.0;
    for traj in space.trajectories(prompt)? {
        let lp = p.logprob_sequence(&traj)?;
        if lp < support_floor_ln() {
            continue;
        }
        let lq = q.logprob_sequence(&traj)?;
        check_support("q", lq, &traj)?;
        total += lp.exp() * (lp - lq);
    }
    Ok(total.max(0.0))
}

/// Reverse KL averaged uniformly over prompts.
pub fn mean_reverse_kl(p: &Policy, q: &Policy, space: &SequenceSpace, prompts: &[PromptId]) -> Result<f64> {
    if prompts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &prompt in prompts {
        total += exact_reverse_kl(p, q, space, prompt)?;
    }
    Ok(total / prompts.len() as f64)
}

pub fn objective_opd(student: &Policy, teacher: &Policy, space: &SequenceSpace, prompt: PromptId) -> Result<ObjectiveValue> {
    Ok(ObjectiveValue {
        value: exact_reverse_kl(student, teacher, space, prompt)?,
        form: ObjectiveForm::Opd,
        lambda: 1.0,
    })
}

fn gopd_objective(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompt: PromptId,
    form: ObjectiveForm,
) -> Result<ObjectiveValue> {
    let mut total = 0.0;
    for traj in space.trajectories(prompt)? {
        let ls = student.logprob_sequence(&traj)?;
        if ls < support_floor_ln() {
            continue;
        }
        let lt = teacher.logprob_sequence(&traj)?;
        let lr = reference.logprob_sequence(&traj)?;
        check_support("teacher", lt, &traj)?;
        check_support("reference", lr, &traj)?;
        let reward = lt - lr;
        let term = match form {
            ObjectiveForm::GopdForm1 => lambda * reward - (ls - lr),
            ObjectiveForm::GopdForm2 => (lambda - 1.0) * reward - (ls - lt),
            ObjectiveForm::Opd => unreachable!("opd has its own entry point"),
        };
        total += ls.exp() * term;
    }
    Ok(ObjectiveValue {
        value: total,
        form,
        lambda,
    })
}

pub fn objective_gopd_form1(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<ObjectiveValue> {
    gopd_objective(student, teacher, reference, lambda, space, prompt, ObjectiveForm::GopdForm1)
}

pub fn objective_gopd_form2(
    student: &Policy,
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<ObjectiveValue> {
    gopd_objective(student, teacher, reference, lambda, space, prompt, ObjectiveForm::GopdForm2)
}

/// Log-weights `λ log π*(y) + (1−λ) log π_ref(y)` for every response, normalized.
fn mixture_logprobs(
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<Vec<(Trajectory, f64)>> {
    let mut trajs = Vec::new();
    let mut weights = Vec::new();
    for traj in space.trajectories(prompt)? {
        let lt = teacher.logprob_sequence(&traj)?;
        let lr = reference.logprob_sequence(&traj)?;
        check_support("teacher", lt, &traj)?;
        check_support("reference", lr, &traj)?;
        weights.push(lambda * lt + (1.0 - lambda) * lr);
        trajs.push(traj);
    }
    let log_z = logsumexp(&weights);
    if !log_z.is_finite() {
        return Err(Error::Underflow { lambda });
    }
    let mut out = Vec::with_capacity(trajs.len());
    for (traj, w) in trajs.into_iter().zip(weights) {
        let lp = w - log_z;
        if !lp.is_finite() || lp < support_floor_ln() {
            return Err(Error::Underflow { lambda });
        }
        out.push((traj, lp));
    }
    Ok(out)
}

/// `log Z = log Σ_y π_ref(y) exp(λ · log π*(y)/π_ref(y))`, the partition function
/// of the KL-regularized optimum with reward `log π*/π_ref` and `β = 1/λ`.
pub fn log_partition(
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompt: PromptId,
) -> Result<f64> {
    let mut weights = Vec::new();
    for traj in space.trajectories(prompt)? {
        let lt = teacher.logprob_sequence(&traj)?;
        let lr = reference.logprob_sequence(&traj)?;
        check_support("teacher", lt, &traj)?;
        check_support("reference", lr, &traj)?;
        weights.push(lr + lambda * (lt - lr));
    }
    Ok(logsumexp(&weights))
}

/// The normalized sequence-level mixture `∝ π*(y)^λ · π_ref(y)^(1−λ)`, factorized
/// into exact next-token conditionals on a full-prefix table.
pub fn geometric_mixture(
    teacher: &Policy,
    reference: &Policy,
    lambda: f64,
    space: &SequenceSpace,
    prompts: &[PromptId],
) -> Result<Policy> {
    let vocab = teacher.vocab();
    if reference.vocab() != vocab {
        return Err(Error::ShapeMismatch("teacher and reference vocabularies differ".into()));
    }
    let mut out = Policy::new(vocab, space.horizon, PolicyKind::SoftmaxTrainable, Role::Reference);
    for &prompt in prompts {
        // Mass of each (prefix, next token) edge of the prefix tree, in log space.
        let mut edges: BTreeMap<Vec<TokenId>, Vec<Vec<f64>>> = BTreeMap::new();
        for (traj, lp) in mixture_logprobs(teacher, reference, lambda, space, prompt)? {
            for (t, &tok) in traj.tokens.iter().enumerate() {
                let node = edges
                    .entry(traj.tokens[..t].to_vec())
                    .or_insert_with(|| vec![Vec::new(); vocab.size()]);
                node[tok as usize].push(lp);
            }
        }
        for (prefix, masses) in edges {
            let logits: Vec<f64> = masses.iter().map(|m| logsumexp(m)).collect();
            if logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::Underflow { lambda });
            }
            out.insert(prompt, prefix, logits)?;
        }
    }
    Ok(out.into_frozen())
}

/// `½ Σ_y |p(y) − q(y)|`.
pub fn tv_distance(p: &Policy, q: &Policy, space: &SequenceSpace, prompt: PromptId) -> Result<f64> {
    let mut total = 0.0;
    for traj in space.trajectories(prompt)? {
        let a = p.logprob_sequence(&traj)?.exp();
        let b = q.logprob_sequence(&traj)?.exp();
        total += (a - b).abs();
    }
    Ok((0.5 * total).min(1.0))
}

/// Largest per-prompt TV distance.
pub fn max_tv_distance(p: &Policy, q: &Policy, space: &SequenceSpace, prompts: &[PromptId]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &prompt in prompts {
        worst = worst.max(tv_distance(p, q, space, prompt)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Vocab;

    fn bandit(probs: &[f64]) -> Policy {
        let v = Vocab::new(2, 1).unwrap();
        let mut p = Policy::new(v, 1, PolicyKind::SoftmaxTrainable, Role::Student);
        p.insert(PromptId(0), vec![], probs.iter().map(|x| x.ln()).collect())
            .unwrap();
        p.into_frozen()
    }

    fn space1() -> SequenceSpace {
        SequenceSpace::new(Vocab::new(2, 1).unwrap(), 1)
    }

    #[test]
    fn kl_identity_and_value() {
        let p = bandit(&[0.5, 0.5]);
        let q = bandit(&[0.8, 0.2]);
        let s = space1();
        assert_eq!(exact_reverse_kl(&p, &p, &s, PromptId(0)).unwrap(), 0.0);
        let oracle = 0.5 * (0.5f64 / 0.8).ln() + 0.5 * (0.5f64 / 0.2).ln();
        let kl = exact_reverse_kl(&p, &q, &s, PromptId(0)).unwrap();
        assert!((kl - oracle).abs() < 1e-15);
        assert!((kl - 0.2231).abs() < 1e-4);
        let back = exact_reverse_kl(&q, &p, &s, PromptId(0)).unwrap();
        let oracle_back = 0.8 * (0.8f64 / 0.5).ln() + 0.2 * (0.2f64 / 0.5).ln();
        assert!((back - oracle_back).abs() < 1e-15);
        assert!((back - kl).abs() > 1e-3);
    }

    #[test]
    fn support_violation_is_an_error() {
        let v = Vocab::new(2, 1).unwrap();
        let mut q = Policy::new(v, 1, PolicyKind::SoftmaxTrainable, Role::Teacher);
        q.insert(PromptId(0), vec![], vec![1e9, -1e9]).unwrap();
        let p = bandit(&[0.5, 0.5]);
        assert!(matches!(
            exact_reverse_kl(&p, &q, &space1(), PromptId(0)),
            Err(Error::SupportMismatch(_))
        ));
        // The other direction only looks at q's support.
        assert!(exact_reverse_kl(&q, &p, &space1(), PromptId(0)).is_ok());
    }

    #[test]
    fn mixture_half() {
        let t = bandit(&[0.8, 0.2]);
        let r = bandit(&[0.5, 0.5]);
        let m = geometric_mixture(&t, &r, 0.5, &space1(), &[PromptId(0)]).unwrap();
        let a = (0.8f64 * 0.5).sqrt();
        let b = (0.2f64 * 0.5).sqrt();
        let p0 = m.logprob_token(PromptId(0), &[], 0).unwrap().exp();
        assert!((p0 - a / (a + b)).abs() < 1e-15);
        assert!((p0 - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn mixture_endpoints() {
        let t = bandit(&[0.8, 0.2]);
        let r = bandit(&[0.3, 0.7]);
        let s = space1();
        let m0 = geometric_mixture(&t, &r, 0.0, &s, &[PromptId(0)]).unwrap();
        let m1 = geometric_mixture(&t, &r, 1.0, &s, &[PromptId(0)]).unwrap();
        assert!(tv_distance(&m0, &r, &s, PromptId(0)).unwrap() < 1e-12);
        assert!(tv_distance(&m1, &t, &s, PromptId(0)).unwrap() < 1e-12);
    }

    #[test]
    fn mixture_underflow() {
        let t = bandit(&[0.999999, 0.000001]);
        let r = bandit(&[0.5, 0.5]);
        assert!(matches!(
            geometric_mixture(&t, &r, 80.0, &space1(), &[PromptId(0)]),
            Err(Error::Underflow { .. })
        ));
    }

    #[test]
    fn tv_values() {
        let s = space1();
        let a = bandit(&[0.8, 0.2]);
        let b = bandit(&[0.5, 0.5]);
        assert!((tv_distance(&a, &b, &s, PromptId(0)).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(tv_distance(&a, &a, &s, PromptId(0)).unwrap(), 0.0);
        let v = Vocab::new(2, 1).unwrap();
        let mut x = Policy::new(v, 1, PolicyKind::SoftmaxTrainable, Role::Student);
        x.insert(PromptId(0), vec![], vec![1e9, -1e9]).unwrap();
        let mut y = Policy::new(v, 1, PolicyKind::SoftmaxTrainable, Role::Student);
        y.insert(PromptId(0), vec![], vec![-1e9, 1e9]).unwrap();
        assert_eq!(tv_distance(&x, &y, &s, PromptId(0)).unwrap(), 1.0);
    }

    #[test]
    fn opd_reduction_of_form2() {
        let st = bandit(&[0.4, 0.6]);
        let t = bandit(&[0.8, 0.2]);
        let r = bandit(&[0.3, 0.7]);
        let s = space1();
        let f2 = objective_gopd_form2(&st, &t, &r, 1.0, &s, PromptId(0)).unwrap();
        let kl = exact_reverse_kl(&st, &t, &s, PromptId(0)).unwrap();
        assert!((f2.value + kl).abs() < 1e-15);
        let f1 = objective_gopd_form1(&st, &t, &r, 0.0, &s, PromptId(0)).unwrap();
        let kl_ref = exact_reverse_kl(&st, &r, &s, PromptId(0)).unwrap();
        assert!((f1.value + kl_ref).abs() < 1e-15);
        let f1_teacher_ref = objective_gopd_form1(&st, &t, &t, 1.0, &s, PromptId(0)).unwrap();
        assert!((f1_teacher_ref.value + kl).abs() < 1e-15);
    }

    #[test]
    fn log_partition_matches_mixture_normalizer() {
        let t = bandit(&[0.8, 0.2]);
        let r = bandit(&[0.5, 0.5]);
        let lz = log_partition(&t, &r, 0.5, &space1(), PromptId(0)).unwrap();
        let direct = ((0.8f64 * 0.5).sqrt() + (0.2f64 * 0.5).sqrt()).ln();
        assert!((lz - direct).abs() < 1e-15);
    }
}
