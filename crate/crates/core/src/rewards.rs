//! Dense implicit token rewards, sparse outcome rewards, scaling and correction.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, PromptId, Role, TokenId, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    Implicit,
    SparseOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenRewardVector {
    pub values: Vec<f64>,
    pub kind: RewardKind,
}

impl TokenRewardVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Left-to-right sum.
    pub fn total(&self) -> f64 {
        let mut s = 0.0;
        for &v in &self.values {
            s += v;
        }
        s
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// Which model the implicit reward is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceRole {
    StudentBase,
    TeacherBase,
}

impl ReferenceRole {
    pub fn role(self) -> Role {
        match self {
            ReferenceRole::StudentBase => Role::StudentBase,
            ReferenceRole::TeacherBase => Role::TeacherBase,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub lambda: f64,
    pub reference_role: ReferenceRole,
    pub correction: bool,
}

impl RewardSpec {
    pub fn validate(&self, teacher_base_registered: bool) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        let needs_base = self.correction || self.reference_role == ReferenceRole::TeacherBase;
        if needs_base && !teacher_base_registered {
            return Err(Error::InvalidConfig(
                "teacher-base reference or correction requires a registered teacher base".into(),
            ));
        }
        if self.correction && self.reference_role == ReferenceRole::TeacherBase {
            return Err(Error::InvalidConfig(
                "correction applies to student-base rewards; reference is already teacher-base".into(),
            ));
        }
        Ok(())
    }
}

/// `r_t = log π*(y_t | ·) − log π_ref(y_t | ·)`.
pub fn implicit_token_rewards(teacher: &Policy, reference: &Policy, trajectory: &Trajectory) -> Result<TokenRewardVector> {
    let lt = teacher.token_logprobs(trajectory)?;
    let lr = reference.token_logprobs(trajectory)?;
    Ok(implicit_from_logprobs(&lt, &lr))
}

pub fn implicit_from_logprobs(teacher: &[f64], reference: &[f64]) -> TokenRewardVector {
    TokenRewardVector {
        values: teacher.iter().zip(reference).map(|(a, b)| a - b).collect(),
        kind: RewardKind::Implicit,
    }
}

/// Shifts rewards measured against the student's base onto the teacher's base by
/// adding `log π_base^student − log π_base^teacher` per token.
pub fn reward_correction(
    rewards: &TokenRewardVector,
    student_base: &Policy,
    teacher_base: &Policy,
    trajectory: &Trajectory,
) -> Result<TokenRewardVector> {
    if rewards.len() != trajectory.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rewards for a trajectory of length {}",
            rewards.len(),
            trajectory.len()
        )));
    }
    let ls = student_base.token_logprobs(trajectory)?;
    let lt = teacher_base.token_logprobs(trajectory)?;
    let values = rewards
        .values
        .iter()
        .zip(ls.iter().zip(&lt))
        .map(|(r, (s, t))| r + (s - t))
        .collect();
    Ok(TokenRewardVector {
        values,
        kind: rewards.kind,
    })
}

/// Zero everywhere except the last token, which carries 1 when the answer verified.
pub fn sparse_outcome_reward(verified: bool, trajectory: &Trajectory) -> TokenRewardVector {
    let mut values = vec![0.0; trajectory.len()];
    if let Some(last) = values.last_mut() {
        *last = if verified { 1.0 } else { 0.0 };
    }
    TokenRewardVector {
        values,
        kind: RewardKind::SparseOutcome,
    }
}

pub fn scale_rewards(rewards: &TokenRewardVector, lambda: f64) -> TokenRewardVector {
    TokenRewardVector {
        values: rewards.values.iter().map(|r| lambda * r).collect(),
        kind: rewards.kind,
    }
}

/// One line of the optional reward dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub prompt: PromptId,
    pub tokens: Vec<TokenId>,
    /// Per-token rewards keyed by the reference they were measured against.
    pub rewards: BTreeMap<String, Vec<f64>>,
}

pub fn write_reward_dump<W: Write>(mut out: W, records: &[RewardRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{PolicyKind, Vocab};

    fn bandit(probs: &[f64]) -> Policy {
        let v = Vocab::new(probs.len(), (probs.len() - 1) as TokenId).unwrap();
        let mut p = Policy::new(v, 0, PolicyKind::SoftmaxTrainable, Role::Teacher);
        p.insert(PromptId(0), vec![], probs.iter().map(|x| x.ln()).collect())
            .unwrap();
        p.into_frozen()
    }

    #[test]
    fn identical_policies_give_zero() {
        let p = bandit(&[0.3, 0.7]);
        let t = Trajectory::new(PromptId(0), vec![0, 0, 1]);
        let r = implicit_token_rewards(&p, &p, &t).unwrap();
        assert_eq!(r.values, vec![0.0; 3]);
    }

    #[test]
    fn single_token_log_ratio() {
        let t = bandit(&[0.8, 0.2]);
        let r = bandit(&[0.5, 0.5]);
        let traj = Trajectory::new(PromptId(0), vec![0]);
        let v = implicit_token_rewards(&t, &r, &traj).unwrap().values[0];
        assert!((v - (0.8f64 / 0.5).ln()).abs() < 1e-15);
        assert!((v - 0.4700).abs() < 1e-4);
    }

    #[test]
    fn sparse_rule() {
        let t = Trajectory::new(PromptId(0), vec![0, 0, 1]);
        assert_eq!(sparse_outcome_reward(true, &t).values, vec![0.0, 0.0, 1.0]);
        assert_eq!(sparse_outcome_reward(false, &t).values, vec![0.0, 0.0, 0.0]);
        let t1 = Trajectory::new(PromptId(0), vec![1]);
        assert_eq!(sparse_outcome_reward(true, &t1).values, vec![1.0]);
    }

    #[test]
    fn scaling() {
        let r = TokenRewardVector {
            values: vec![0.4, -0.2],
            kind: RewardKind::Implicit,
        };
        assert_eq!(scale_rewards(&r, 1.0), r);
        assert_eq!(scale_rewards(&r, 0.0).values, vec![0.0, -0.0]);
        let s = scale_rewards(&r, 1.25).values;
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn correction_with_equal_bases_is_identity() {
        let t = bandit(&[0.8, 0.2]);
        let b = bandit(&[0.5, 0.5]);
        let traj = Trajectory::new(PromptId(0), vec![0, 1]);
        let r = implicit_token_rewards(&t, &b, &traj).unwrap();
        assert_eq!(reward_correction(&r, &b, &b, &traj).unwrap(), r);
    }

    #[test]
    fn spec_validation() {
        let spec = RewardSpec {
            lambda: 1.25,
            reference_role: ReferenceRole::StudentBase,
            correction: true,
        };
        assert!(spec.validate(false).is_err());
        assert!(spec.validate(true).is_ok());
        let both = RewardSpec {
            reference_role: ReferenceRole::TeacherBase,
            ..spec
        };
        assert!(both.validate(true).is_err());
    }

    #[test]
    fn dump_is_one_json_object_per_line() {
        let mut rewards = BTreeMap::new();
        rewards.insert("student-base".to_string(), vec![0.5, -0.25]);
        let rec = RewardRecord {
            prompt: PromptId(3),
            tokens: vec![0, 1],
            rewards,
        };
        let mut buf = Vec::new();
        write_reward_dump(&mut buf, &[rec.clone(), rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: RewardRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back.prompt, PromptId(3));
    }
}
