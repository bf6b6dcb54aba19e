//! Quick invariant checks behind `opdlab verify`.

use opdlab_core::divergence::{log_partition, objective_gopd_form1, objective_gopd_form2};
use opdlab_core::estimators::{expected_gradient_oracle, finite_difference_gradient, grpo_scores};
use opdlab_core::instances::{random_instance, Instance};
use opdlab_core::{exact_reverse_kl, geometric_mixture, EstimatorVariant, SequenceSpace};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<28} {}", self.name, self.detail)
    }
}

const INSTANCES: u64 = 20;

fn instances() -> opdlab_core::Result<Vec<(Instance, SequenceSpace)>> {
    (0..INSTANCES)
        .map(|seed| {
            let inst = random_instance(seed, 3, 3, 1.0)?;
            let space = SequenceSpace::new(inst.vocab, inst.horizon);
            Ok((inst, space))
        })
        .collect()
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        pass: worst < tol,
        detail: format!("max error {worst:.3e} (tol {tol:.0e})"),
    }
}

fn forms_agree(cases: &[(Instance, SequenceSpace)]) -> opdlab_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, s) in cases {
        for lambda in [0.0, 0.5, 1.0, 1.5] {
            let a = objective_gopd_form1(&i.student, &i.teacher, &i.reference, lambda, s, i.prompt)?.value;
            let b = objective_gopd_form2(&i.student, &i.teacher, &i.reference, lambda, s, i.prompt)?.value;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn unit_scale_is_reverse_kl(cases: &[(Instance, SequenceSpace)]) -> opdlab_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, s) in cases {
        let v = objective_gopd_form2(&i.student, &i.teacher, &i.reference, 1.0, s, i.prompt)?.value;
        let kl = exact_reverse_kl(&i.student, &i.teacher, s, i.prompt)?;
        worst = worst.max((v + kl).abs());
    }
    Ok(worst)
}

fn mixture_attains_log_partition(cases: &[(Instance, SequenceSpace)]) -> opdlab_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, s) in cases {
        let lambda = 1.25;
        let mix = geometric_mixture(&i.teacher, &i.reference, lambda, s, &[i.prompt])?;
        let v = objective_gopd_form1(&mix, &i.teacher, &i.reference, lambda, s, i.prompt)?.value;
        let z = log_partition(&i.teacher, &i.reference, lambda, s, i.prompt)?;
        worst = worst.max((v - z).abs());
    }
    Ok(worst)
}

fn gradient_matches_finite_differences(cases: &[(Instance, SequenceSpace)]) -> opdlab_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, s) in cases.iter().take(5) {
        let lambda = 1.25;
        let oracle =
            expected_gradient_oracle(&i.student, &i.teacher, &i.reference, lambda, EstimatorVariant::GopdFull, s, i.prompt)?;
        let fd = finite_difference_gradient(
            |x| {
                let st = i.student.with_params(x.to_vec())?;
                Ok(-objective_gopd_form1(&st, &i.teacher, &i.reference, lambda, s, i.prompt)?.value)
            },
            i.student.params(),
            1e-5,
        )?;
        worst = worst.max(oracle.relative_error(&fd));
    }
    Ok(worst)
}

fn equal_rewards_give_zero() -> opdlab_core::Result<f64> {
    let scores = grpo_scores(&[0.5; 8])?;
    Ok(scores.iter().map(|x| x.abs()).fold(0.0, f64::max))
}

/// Runs every check; `Err` only for failures to evaluate at all.
pub fn run_checks() -> Result<Vec<Check>> {
    let cases = instances()?;
    Ok(vec![
        check("objective forms agree", forms_agree(&cases)?, 1e-10),
        check("unit scale is reverse kl", unit_scale_is_reverse_kl(&cases)?, 1e-10),
        check("mixture attains log Z", mixture_attains_log_partition(&cases)?, 1e-9),
        check("gradient vs finite diff", gradient_matches_finite_differences(&cases)?, 1e-6),
        check("equal rewards zero grpo", equal_rewards_give_zero()?, 1e-300),
    ])
}
