//! Training state and its text checkpoint.
//!
//! A checkpoint is a policy block followed by a footer:
//!
//! ```text
//! ckpt v1
//! step <n>
//! trajectories <n>
//! optimizer <sgd|adam-like> <lr> <t>
//! rng <seed hex> <stream> <word_pos>
//! m <floats or ->
//! v <floats or ->
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::{parse_f64, parse_policy_block, policy_to_string, write_f64};
use crate::optim::{Algorithm, Optimizer, OptimizerConfig};
use crate::policy::{Policy, PolicyKind, Role};

pub const CKPT_HEADER: &str = "ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub student: Policy,
    pub optimizer: Optimizer,
    pub step: u64,
    pub rng: ChaCha8Rng,
    /// Trajectories drawn so far, shared by every trainer for budget parity.
    pub trajectories_consumed: u64,
}

impl TrainState {
    pub fn new(student: Policy, config: &OptimizerConfig) -> Self {
        TrainState {
            student,
            optimizer: Optimizer::from_config(config),
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            trajectories_consumed: 0,
        }
    }

    /// Applies one descent step. A non-finite gradient or result leaves the state
    /// untouched and aborts with a checkpoint of it.
    pub fn apply(&mut self, grad: &[f64]) -> Result<()> {
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(self.abort(format!("non-finite gradient entry at index {i}")));
        }
        let mut params = self.student.params().to_vec();
        let mut optimizer = self.optimizer.clone();
        optimizer.step(&mut params, grad)?;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(self.abort(format!("parameter {i} became non-finite")));
        }
        self.student.params_mut()?.copy_from_slice(&params);
        self.optimizer = optimizer;
        self.step += 1;
        Ok(())
    }

    pub fn abort(&self, reason: String) -> Error {
        Error::TrainingAborted {
            step: self.step,
            reason,
            checkpoint: Box::new(self.to_checkpoint()),
        }
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = policy_to_string(&self.student);
        writeln!(out, "{CKPT_HEADER}").unwrap();
        writeln!(out, "step {}", self.step).unwrap();
        writeln!(out, "trajectories {}", self.trajectories_consumed).unwrap();
        write!(out, "optimizer {} ", self.optimizer.algorithm.name()).unwrap();
        write_f64(&mut out, self.optimizer.learning_rate);
        writeln!(out, " {}", self.optimizer.t).unwrap();
        let seed: String = self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        writeln!(
            out,
            "rng {seed} {} {}",
            self.rng.get_stream(),
            self.rng.get_word_pos()
        )
        .unwrap();
        write_vector(&mut out, "m", &self.optimizer.m);
        write_vector(&mut out, "v", &self.optimizer.v);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (student, consumed) = parse_policy_block(text, PolicyKind::SoftmaxTrainable, Role::Student)?;
        let mut lines = text
            .lines()
            .enumerate()
            .skip(consumed)
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(text.lines().count() + 1, format!("missing `{what}` line")))
        };
        let (n, header) = next(CKPT_HEADER)?;
        if header.trim() != CKPT_HEADER {
            return Err(Error::parse(n, format!("expected `{CKPT_HEADER}`")));
        }
        let (n, line) = next("step")?;
        let step = parse_u64(n, field(n, line, "step")?)?;
        let (n, line) = next("trajectories")?;
        let trajectories_consumed = parse_u64(n, field(n, line, "trajectories")?)?;

        let (n, line) = next("optimizer")?;
        let parts: Vec<&str> = field(n, line, "optimizer")?.split_whitespace().collect();
        let [alg, lr, t] = parts[..] else {
            return Err(Error::parse(n, "optimizer line needs algorithm, lr and t"));
        };
        let algorithm =
            Algorithm::from_name(alg).ok_or_else(|| Error::parse(n, format!("unknown optimizer `{alg}`")))?;
        let mut optimizer = Optimizer::new(algorithm, parse_f64(n, lr)?);
        optimizer.t = parse_u64(n, t)?;

        let (n, line) = next("rng")?;
        let parts: Vec<&str> = field(n, line, "rng")?.split_whitespace().collect();
        let [seed_hex, stream, word_pos] = parts[..] else {
            return Err(Error::parse(n, "rng line needs seed, stream and word position"));
        };
        let rng = restore_rng(n, seed_hex, stream, word_pos)?;

        let (n, line) = next("m")?;
        optimizer.m = parse_vector(n, field(n, line, "m")?)?;
        let (n, line) = next("v")?;
        optimizer.v = parse_vector(n, field(n, line, "v")?)?;
        if optimizer.m.len() != optimizer.v.len() || optimizer.m.len() > student.num_params() {
            return Err(Error::parse(n, "optimizer moments do not match the policy"));
        }
        Ok(TrainState {
            student,
            optimizer,
            step,
            rng,
            trajectories_consumed,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        TrainState::from_checkpoint(&text)
    }
}

fn field<'a>(n: usize, line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::parse(n, format!("expected `{key}` line")))
}

fn parse_u64(n: usize, s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(n, format!("bad integer `{s}`")))
}

fn write_vector(out: &mut String, key: &str, xs: &[f64]) {
    out.push_str(key);
    if xs.is_empty() {
        out.push_str(" -");
    }
    for &x in xs {
        out.push(' ');
        write_f64(out, x);
    }
    out.push('\n');
}

fn parse_vector(n: usize, s: &str) -> Result<Vec<f64>> {
    if s.trim() == "-" {
        return Ok(Vec::new());
    }
    s.split_whitespace().map(|x| parse_f64(n, x)).collect()
}

fn restore_rng(n: usize, seed_hex: &str, stream: &str, word_pos: &str) -> Result<ChaCha8Rng> {
    if seed_hex.len() != 64 {
        return Err(Error::parse(n, "rng seed must be 64 hex digits"));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::parse(n, "bad hex in rng seed"))?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(parse_u64(n, stream)?);
    let pos: u128 = word_pos
        .parse()
        .map_err(|_| Error::parse(n, format!("bad word position `{word_pos}`")))?;
    rng.set_word_pos(pos);
    Ok(rng)
}
