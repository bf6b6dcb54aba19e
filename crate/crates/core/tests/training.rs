mod common;

use opdlab_core::instances::random_policy;
use opdlab_core::tasks::{build_base_policy, verify};
use opdlab_core::trainers::{
    expo_extrapolate, multi_teacher_schedule, train_gopd, train_rl_teacher, train_sft, GopdTrainer, RlTrainer,
    SftTrainer,
};
use opdlab_core::{
    geometric_mixture, tv_distance, Algorithm, DistillConfig, DomainPool, EstimatorVariant, OptimizerConfig, Policy,
    Problem, PromptId, ReferenceRole, Role, SequenceSpace, SkillProfile, TaskFamily, TaskSet, TaskSpec, TeacherSpec,
    TrainState, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P: PromptId = PromptId(5);

fn opt(algorithm: Algorithm, lr: f64, steps: u64, batch: usize, rollout: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        algorithm,
        learning_rate: lr,
        steps,
        batch_prompts: batch,
        rollout_n: rollout,
        seed,
    }
}

fn pool(domain: &str, prompts: &[PromptId]) -> Vec<DomainPool> {
    vec![DomainPool {
        domain: domain.into(),
        prompts: prompts.to_vec(),
    }]
}

fn spec(teacher: &Policy, base: Option<&Policy>) -> TeacherSpec {
    TeacherSpec {
        domain: "d".into(),
        teacher: teacher.clone(),
        teacher_base: base.cloned(),
    }
}

/// Full-prefix student, teacher and teacher base on prompt `P`.
fn triple(seed: u64, vocab: Vocab, horizon: usize) -> (Policy, Policy, Policy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |role| random_policy(vocab, horizon, horizon, &[P], 1.0, role, &mut rng).unwrap();
    let student = draw(Role::Student);
    let teacher = draw(Role::Teacher).into_frozen();
    let teacher_base = draw(Role::TeacherBase).into_frozen();
    (student, teacher, teacher_base)
}

fn bandit_problem(target: Vec<u32>) -> Problem {
    Problem {
        instance: 0,
        prompt: P,
        family: TaskFamily::Modsum,
        rendering: vec![],
        target,
    }
}

#[test]
fn grpo_bandit_concentrates_on_the_correct_token() {
    let vocab = Vocab::new(3, 2).unwrap();
    let base = Policy::uniform(vocab, 0, 1, &[P], Role::StudentBase).unwrap();
    let problem = bandit_problem(vec![1]);
    let teacher = train_rl_teacher(&base, &[problem], 1, &opt(Algorithm::AdamLike, 0.1, 200, 8, 8, 0)).unwrap();
    let p = teacher.logprob_token(P, &[], 1).unwrap().exp();
    assert!(p >= 0.99, "correct-token probability {p}");
    assert!(teacher.is_frozen() && teacher.role() == Role::Teacher);
}

#[test]
fn grpo_equal_reward_groups_do_not_move_parameters() {
    let vocab = Vocab::new(3, 2).unwrap();
    // Every response fails: the target cannot fit in one token.
    let base = Policy::uniform(vocab, 0, 1, &[P], Role::StudentBase).unwrap();
    let mut rl = RlTrainer::new(&base, vec![bandit_problem(vec![0, 2])], 1, opt(Algorithm::AdamLike, 0.5, 5, 4, 4, 1)).unwrap();
    for _ in 0..5 {
        let s = rl.step().unwrap();
        assert_eq!(s.grad_norm, 0.0);
        assert_eq!(s.reward_max, 0.0);
    }
    assert_eq!(rl.state.student.params(), base.params());

    // Every response succeeds: a deterministic correct policy.
    let mut sure = Policy::new(vocab, 0, opdlab_core::PolicyKind::SoftmaxTrainable, Role::StudentBase);
    sure.insert(P, vec![], vec![1e9, 0.0, 0.0]).unwrap();
    let mut rl = RlTrainer::new(&sure, vec![bandit_problem(vec![0])], 1, opt(Algorithm::Sgd, 1.0, 3, 4, 4, 2)).unwrap();
    for _ in 0..3 {
        let s = rl.step().unwrap();
        assert_eq!((s.reward_min, s.reward_max, s.grad_norm), (1.0, 1.0, 0.0));
    }
    assert_eq!(rl.state.student.params(), sure.params());
}

#[test]
fn grpo_rejects_singleton_groups() {
    let vocab = Vocab::new(3, 2).unwrap();
    let base = Policy::uniform(vocab, 0, 1, &[P], Role::StudentBase).unwrap();
    assert!(RlTrainer::new(&base, vec![bandit_problem(vec![1])], 1, opt(Algorithm::Sgd, 0.1, 1, 1, 1, 0)).is_err());
}

fn copy_reverse_set() -> TaskSet {
    TaskSet::generate(&TaskSpec {
        family: TaskFamily::CopyReverse,
        vocab: Vocab::new(6, 5).unwrap(),
        horizon: 3,
        num_prompts: 16,
        difficulty: 2,
        alphabet: 5,
        split_seed: 2,
    })
    .unwrap()
}

fn skill_base(set: &TaskSet, order: usize, seed: u64, role: Role) -> Policy {
    let profile = SkillProfile {
        order,
        skill: 1.5,
        noise: 1.0,
        seed,
    };
    let mut problems = set.train.clone();
    problems.extend(set.eval.iter().cloned());
    build_base_policy(set.spec.vocab, set.spec.horizon, &problems, &profile, role).unwrap()
}

#[test]
fn rl_teacher_zero_rate_and_reruns() {
    let set = copy_reverse_set();
    let base = skill_base(&set, 2, 7, Role::StudentBase);
    let frozen = train_rl_teacher(&base, &set.train, 3, &opt(Algorithm::Sgd, 0.0, 20, 8, 4, 3)).unwrap();
    assert_eq!(frozen.params(), base.params());
    let cfg = opt(Algorithm::AdamLike, 0.1, 20, 8, 4, 3);
    let a = train_rl_teacher(&base, &set.train, 3, &cfg).unwrap();
    let b = train_rl_teacher(&base, &set.train, 3, &cfg).unwrap();
    assert_ne!(a.params(), base.params());
    let bits = |p: &Policy| p.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

/// Exact-mode training of a full-prefix student; returns the first step whose
/// TV to the closed-form mixture is below `tol`, and the final TV.
fn exact_convergence(seed: u64, lambda: f64, tol: f64, max_steps: u64) -> (Option<u64>, f64) {
    let vocab = Vocab::new(3, 2).unwrap();
    let space = SequenceSpace::new(vocab, 3);
    let (student, teacher, _) = triple(seed, vocab, 3);
    let mut cfg = DistillConfig::single(spec(&teacher, None), lambda, EstimatorVariant::GopdFull, 3);
    cfg.exact = true;
    let mut trainer = GopdTrainer::new(&student, cfg, opt(Algorithm::AdamLike, 0.05, max_steps, 1, 1, seed), pool("d", &[P])).unwrap();
    let target = geometric_mixture(&teacher, trainer.student_base(), lambda, &space, &[P]).unwrap();
    let mut first = None;
    let mut tv = 1.0;
    while !trainer.is_done() {
        trainer.step().unwrap();
        tv = tv_distance(trainer.student(), &target, &space, P).unwrap();
        if first.is_none() && tv < tol {
            first = Some(trainer.state.step);
        }
    }
    (first, tv)
}

#[test]
fn exact_mode_reaches_the_geometric_mixture() {
    for (seed, lambda) in [(0, 0.5), (1, 1.25)] {
        let (first, last) = exact_convergence(seed, lambda, 1e-4, 2000);
        assert!(first.is_some(), "seed {seed} lambda {lambda}: final TV {last:e}");
    }
}

#[test]
fn student_equal_to_teacher_stays_put() {
    let vocab = Vocab::new(3, 1).unwrap();
    let (_, teacher, _) = triple(4, vocab, 3);
    let student = teacher.clone().into_trainable();
    let cfg = DistillConfig::single(spec(&teacher, None), 1.0, EstimatorVariant::Gopd, 3);
    let mut trainer = GopdTrainer::new(&student, cfg, opt(Algorithm::Sgd, 0.5, 10, 4, 4, 0), pool("d", &[P])).unwrap();
    let mut prev = trainer.student().params().to_vec();
    while !trainer.is_done() {
        trainer.step().unwrap();
        let now = trainer.student().params().to_vec();
        let moved = prev.iter().zip(&now).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(moved < 1e-8, "moved {moved}");
        prev = now;
    }
}

fn run_checkpoint(student: &Policy, cfg: DistillConfig, o: OptimizerConfig) -> String {
    let mut trainer = GopdTrainer::new(student, cfg, o, pool("d", &[P])).unwrap();
    trainer.run().unwrap();
    trainer.state.to_checkpoint()
}

#[test]
fn unit_lambda_ignores_the_reference() {
    let vocab = Vocab::new(3, 2).unwrap();
    let (student, teacher, teacher_base) = triple(8, vocab, 3);
    let o = opt(Algorithm::AdamLike, 0.1, 15, 4, 4, 6);
    let plain = DistillConfig::single(spec(&teacher, Some(&teacher_base)), 1.0, EstimatorVariant::Gopd, 3);
    let mut by_base = plain.clone();
    by_base.reference_role = ReferenceRole::TeacherBase;
    let mut corrected = plain.clone();
    corrected.correction = true;
    let mut opd = plain.clone();
    opd.estimator = EstimatorVariant::OpdD0;
    let reference = run_checkpoint(&student, plain.clone(), o.clone());
    assert_eq!(reference, run_checkpoint(&student, by_base.clone(), o.clone()));
    assert_eq!(reference, run_checkpoint(&student, corrected, o.clone()));
    assert_eq!(reference, run_checkpoint(&student, opd, o.clone()));

    // Away from λ = 1 the reference matters.
    let mut ex_plain = plain;
    ex_plain.lambda = 1.25;
    by_base.lambda = 1.25;
    assert_ne!(run_checkpoint(&student, ex_plain, o.clone()), run_checkpoint(&student, by_base, o));
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let vocab = Vocab::new(3, 2).unwrap();
    let (student, teacher, _) = triple(9, vocab, 3);
    let cfg = DistillConfig::single(spec(&teacher, None), 1.25, EstimatorVariant::Gopd, 3);
    let o = opt(Algorithm::AdamLike, 0.1, 12, 4, 4, 10);
    let whole = run_checkpoint(&student, cfg.clone(), o.clone());

    let mut first = GopdTrainer::new(&student, cfg.clone(), o.clone(), pool("d", &[P])).unwrap();
    for _ in 0..5 {
        first.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    first.state.save(&path).unwrap();
    let state = TrainState::load(&path).unwrap();
    assert_eq!(state, first.state);
    let mut second = GopdTrainer::resume(state, &student, cfg, o, pool("d", &[P])).unwrap();
    second.run().unwrap();
    assert_eq!(second.state.to_checkpoint(), whole);
}

#[test]
fn rl_checkpoint_resume_matches_uninterrupted_run() {
    let set = copy_reverse_set();
    let base = skill_base(&set, 2, 3, Role::StudentBase);
    let o = opt(Algorithm::AdamLike, 0.1, 10, 8, 4, 4);
    let mut whole = RlTrainer::new(&base, set.train.clone(), 3, o.clone()).unwrap();
    whole.run().unwrap();
    let mut part = RlTrainer::new(&base, set.train.clone(), 3, o.clone()).unwrap();
    for _ in 0..4 {
        part.step().unwrap();
    }
    let state = TrainState::from_checkpoint(&part.state.to_checkpoint()).unwrap();
    let mut rest = RlTrainer::resume(state, set.train.clone(), 3, o).unwrap();
    rest.run().unwrap();
    assert_eq!(rest.state.to_checkpoint(), whole.state.to_checkpoint());
}

#[test]
fn sft_and_opd_draw_the_same_number_of_trajectories() {
    let vocab = Vocab::new(3, 2).unwrap();
    let (student, teacher, _) = triple(10, vocab, 3);
    let cfg = DistillConfig::single(spec(&teacher, None), 1.0, EstimatorVariant::Gopd, 3);
    let o = opt(Algorithm::Sgd, 0.1, 7, 5, 3, 0);
    let mut sft = SftTrainer::new(&student, &cfg, o.clone(), pool("d", &[P])).unwrap();
    sft.run().unwrap();
    let mut opd = GopdTrainer::new(&student, cfg, o, pool("d", &[P])).unwrap();
    opd.run().unwrap();
    assert_eq!(sft.state.trajectories_consumed, 5 * 3 * 7);
    assert_eq!(opd.state.trajectories_consumed, sft.state.trajectories_consumed);
}

#[test]
fn sft_on_a_deterministic_teacher_copies_its_greedy_answer() {
    let vocab = Vocab::new(4, 3).unwrap();
    let mut teacher = Policy::new(vocab, 3, opdlab_core::PolicyKind::SoftmaxTrainable, Role::Teacher);
    for (prefix, tok) in [(vec![], 2usize), (vec![2], 0), (vec![2, 0], 3)] {
        let mut logits = vec![0.0; 4];
        logits[tok] = 1e9;
        teacher.insert(P, prefix, logits).unwrap();
    }
    let teacher = teacher.into_frozen();
    let student = Policy::uniform(vocab, 3, 3, &[P], Role::Student).unwrap();
    let cfg = DistillConfig::single(spec(&teacher, None), 1.0, EstimatorVariant::Gopd, 3);
    let trained = train_sft(&student, &cfg, opt(Algorithm::AdamLike, 0.1, 60, 4, 4, 0), pool("d", &[P])).unwrap();
    assert_eq!(trained.greedy(P, 3).unwrap(), teacher.greedy(P, 3).unwrap());
    assert_eq!(teacher.greedy(P, 3).unwrap().tokens, vec![2, 0, 3]);
}

#[test]
fn sft_log_likelihood_is_stationary_at_the_teacher() {
    let vocab = Vocab::new(3, 2).unwrap();
    let space = SequenceSpace::new(vocab, 3);
    let (_, teacher, _) = triple(12, vocab, 3);
    let mut entropy = 0.0;
    for t in space.trajectories(P).unwrap() {
        let lp = teacher.logprob_sequence(&t).unwrap();
        entropy -= lp.exp() * lp;
    }
    let cfg = DistillConfig::single(spec(&teacher, None), 1.0, EstimatorVariant::Gopd, 3);
    let student = teacher.clone().into_trainable();
    let mut sft = SftTrainer::new(&student, &cfg, opt(Algorithm::Sgd, 0.01, 50, 32, 4, 1), pool("d", &[P])).unwrap();
    let mut mean = 0.0;
    while !sft.is_done() {
        mean += sft.step().unwrap().train_reward / 50.0;
    }
    assert!((mean + entropy).abs() < 0.05, "mean log-likelihood {mean} vs entropy {entropy}");
    let drift = sft
        .state
        .student
        .params()
        .iter()
        .zip(teacher.params())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(drift < 0.1, "drift {drift}");
}

#[test]
fn strong_to_weak_student_trains() {
    let set = copy_reverse_set();
    let teacher_base = skill_base(&set, 2, 30, Role::TeacherBase);
    let student = skill_base(&set, 1, 20, Role::StudentBase);
    let teacher = train_rl_teacher(&teacher_base, &set.train, 3, &opt(Algorithm::AdamLike, 0.1, 10, 8, 4, 0)).unwrap();
    let mut cfg = DistillConfig::single(spec(&teacher, Some(&teacher_base.clone().into_frozen())), 1.25, EstimatorVariant::Gopd, 3);
    cfg.correction = true;
    let pools = pool("d", &set.train_prompts());
    let trained = train_gopd(&student, cfg, opt(Algorithm::AdamLike, 0.2, 10, 8, 4, 0), pools).unwrap();
    assert_eq!(trained.order(), 1);
    assert!(trained.params().iter().all(|x| x.is_finite()));
    let t = trained.sample_trajectory(set.eval[0].prompt, 3, 1).unwrap();
    let _ = verify(&set.eval[0], &t);
}

#[test]
fn multi_teacher_schedule_pairs_prompts_with_their_teacher() {
    let vocab = Vocab::new(3, 2).unwrap();
    let (_, t1, _) = triple(13, vocab, 2);
    let (_, t2, _) = triple(14, vocab, 2);
    let mut cfg = DistillConfig::single(spec(&t1, None), 1.0, EstimatorVariant::Gopd, 2);
    cfg.teachers.push(TeacherSpec {
        domain: "e".into(),
        teacher: t2,
        teacher_base: None,
    });
    let pools = vec![
        DomainPool {
            domain: "e".into(),
            prompts: vec![PromptId(20), PromptId(21)],
        },
        DomainPool {
            domain: "d".into(),
            prompts: vec![PromptId(10), PromptId(11)],
        },
    ];
    let s = multi_teacher_schedule(&cfg, pools.clone(), 8, 3).unwrap();
    assert_eq!(s.counts(0), vec![4, 4]);
    for step in 0..5 {
        let a = s.assignment(step);
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|&(p, d)| (d == 0) == (p.0 < 20)));
        assert_eq!(a, multi_teacher_schedule(&cfg, pools.clone(), 8, 3).unwrap().assignment(step));
    }
    let odd = multi_teacher_schedule(&cfg, pools.clone(), 9, 3).unwrap();
    assert_eq!((odd.counts(0), odd.counts(1)), (vec![5, 4], vec![4, 5]));
    cfg.teachers.pop();
    assert!(multi_teacher_schedule(&cfg, pools, 8, 3).is_err());
}

#[test]
fn expo_on_random_vectors() {
    let vocab = Vocab::new(3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (student, _, _) = triple(16, vocab, 2);
    let n = student.num_params();
    let mut draw = || student.with_params((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let (a, b) = (draw(), draw());
    let out = expo_extrapolate(&[&a, &b], &student, 0.5).unwrap();
    for i in 0..n {
        let avg = 0.5 * (a.params()[i] + b.params()[i]);
        let by_hand = 1.5 * avg - 0.5 * student.params()[i];
        assert!((out.params()[i] - by_hand).abs() < 1e-12);
    }
    let same = expo_extrapolate(&[&student], &student, 2.7).unwrap();
    assert_eq!(same.params(), student.params());
}
