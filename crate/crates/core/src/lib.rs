//! Tabular policies, exact divergences and on-policy distillation estimators.

pub mod checkpoint;
pub mod divergence;
pub mod error;
pub mod estimators;
pub mod format;
pub mod instances;
pub mod optim;
pub mod policy;
pub mod rewards;
pub mod tasks;
pub mod trainers;

pub use error::{Error, Result};
pub use policy::{Policy, PolicyKind, PromptId, Role, SequenceSpace, TokenId, Trajectory, Vocab};
pub use checkpoint::TrainState;
pub use divergence::{exact_reverse_kl, geometric_mixture, tv_distance, ObjectiveForm, ObjectiveValue};
pub use estimators::{AdvantageVector, Averaging, Direction, EstimatorVariant, GradientVector};
pub use optim::{Algorithm, OptimizerConfig};
pub use rewards::{ReferenceRole, RewardKind, RewardSpec, TokenRewardVector};
pub use tasks::{EvalResult, Problem, SkillProfile, TaskFamily, TaskSet, TaskSpec};
pub use trainers::{DistillConfig, DomainPool, StepStats, TeacherSpec};
