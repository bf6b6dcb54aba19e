//! Token alphabets, trajectories and tabular autoregressive policies.
//!
//! A [`Policy`] is a table from `(prompt, context window)` to a logit vector.
//! The context window is the last `order` tokens of the generated prefix, so a
//! policy with `order >= horizon - 1` conditions on the full prefix.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Default cap on `vocab.size ^ horizon` for exact enumeration.
pub const DEFAULT_ENUM_CAP: u64 = 1 << 20;

/// Identifier of the conditioning input `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PromptId(pub u32);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: usize,
    eos: TokenId,
}

impl Vocab {
    pub fn new(size: usize, eos: TokenId) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!("vocab size {size} < 2")));
        }
        if eos as usize >= size {
            return Err(Error::InvalidConfig(format!(
                "eos id {eos} out of range for vocab size {size}"
            )));
        }
        Ok(Vocab { size, eos })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> {
        0..self.size as TokenId
    }

    /// Non-EOS tokens in id order.
    pub fn symbols(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens().filter(move |&t| t != self.eos)
    }

    /// Maps a symbol index in `0..size-1` to its token id, skipping EOS.
    pub fn symbol(&self, index: usize) -> Option<TokenId> {
        if index + 1 >= self.size {
            return None;
        }
        let id = index as TokenId;
        Some(if id < self.eos { id } else { id + 1 })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub prompt: PromptId,
    pub tokens: Vec<TokenId>,
}

impl Trajectory {
    pub fn new(prompt: PromptId, tokens: Vec<TokenId>) -> Self {
        Trajectory { prompt, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(prefix, token)` pairs in generation order.
    pub fn steps(&self) -> impl Iterator<Item = (&[TokenId], TokenId)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(t, &tok)| (&self.tokens[..t], tok))
    }

    pub fn ends_with_eos(&self, vocab: &Vocab) -> bool {
        self.tokens.last() == Some(&vocab.eos())
    }

    pub fn validate(&self, vocab: &Vocab, horizon: usize) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 || n > horizon {
            return Err(Error::ShapeMismatch(format!(
                "trajectory length {n} outside 1..={horizon}"
            )));
        }
        for (t, &tok) in self.tokens.iter().enumerate() {
            if tok as usize >= vocab.size() {
                return Err(Error::ShapeMismatch(format!("token {tok} out of vocab")));
            }
            if tok == vocab.eos() && t + 1 != n {
                return Err(Error::ShapeMismatch("EOS before final position".into()));
            }
        }
        if n < horizon && !self.ends_with_eos(vocab) {
            return Err(Error::ShapeMismatch(
                "trajectory shorter than horizon must end with EOS".into(),
            ));
        }
        Ok(())
    }
}

/// The finite set of responses reachable under a vocabulary and horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceSpace {
    pub vocab: Vocab,
    pub horizon: usize,
    pub cap: u64,
}

impl SequenceSpace {
    pub fn new(vocab: Vocab, horizon: usize) -> Self {
        SequenceSpace {
            vocab,
            horizon,
            cap: DEFAULT_ENUM_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.check().is_ok()
    }

    fn check(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        let size = (self.vocab.size() as u128)
            .checked_pow(self.horizon as u32)
            .unwrap_or(u128::MAX);
        if size > self.cap as u128 {
            return Err(Error::EnumerationTooLarge {
                size,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// All responses in depth-first, token-id order.
    pub fn sequences(&self) -> Result<Vec<Vec<TokenId>>> {
        self.check()?;
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.horizon);
        self.walk(&mut prefix, &mut out);
        Ok(out)
    }

    fn walk(&self, prefix: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
        for tok in self.vocab.tokens() {
            prefix.push(tok);
            if tok == self.vocab.eos() || prefix.len() == self.horizon {
                out.push(prefix.clone());
            } else {
                self.walk(prefix, out);
            }
            prefix.pop();
        }
    }

    pub fn trajectories(&self, prompt: PromptId) -> Result<Vec<Trajectory>> {
        Ok(self
            .sequences()?
            .into_iter()
            .map(|tokens| Trajectory { prompt, tokens })
            .collect())
    }

    /// Every prefix at which a token is still to be generated (no EOS, length < horizon).
    pub fn open_prefixes(&self) -> Result<Vec<Vec<TokenId>>> {
        self.check()?;
        let mut out = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 1..self.horizon {
            let mut next = Vec::new();
            for p in &frontier {
                for tok in self.vocab.symbols() {
                    let mut q: Vec<TokenId> = p.clone();
                    q.push(tok);
                    next.push(q);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        Ok(out)
    }
}

pub fn enumerate_sequences(
    vocab: Vocab,
    horizon: usize,
    prompt: PromptId,
    cap: u64,
) -> Result<Vec<Trajectory>> {
    SequenceSpace::new(vocab, horizon)
        .with_cap(cap)
        .trajectories(prompt)
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Shannon entropy in nats of the distribution with the given log-probabilities.
pub fn entropy_of(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .map(|&lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    TabularFrozen,
    SoftmaxTrainable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Student,
    Teacher,
    Reference,
    TeacherBase,
    StudentBase,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Student => "student",
            Role::Teacher => "teacher",
            Role::Reference => "reference",
            Role::TeacherBase => "teacher-base",
            Role::StudentBase => "student-base",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ContextKey {
    pub prompt: PromptId,
    pub window: Vec<TokenId>,
}

/// Tabular softmax policy over a flat parameter vector.
///
/// Slot `i` owns `params[i * vocab.size .. (i + 1) * vocab.size]`. Slots are
/// appended in insertion order, which is also the serialization order, so a
/// parameter layout survives a save/load cycle unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    vocab: Vocab,
    order: usize,
    kind: PolicyKind,
    role: Role,
    uniform_fallback: bool,
    index: BTreeMap<PromptId, BTreeMap<Vec<TokenId>, usize>>,
    slots: Vec<ContextKey>,
    params: Vec<f64>,
}

impl Policy {
    pub fn new(vocab: Vocab, order: usize, kind: PolicyKind, role: Role) -> Self {
        Policy {
            vocab,
            order,
            kind,
            role,
            uniform_fallback: false,
            index: BTreeMap::new(),
            slots: Vec::new(),
            params: Vec::new(),
        }
    }

    /// Trainable policy with a zero-logit (uniform) slot for every context reachable
    /// on `prompts` within `horizon`.
    pub fn uniform(
        vocab: Vocab,
        order: usize,
        horizon: usize,
        prompts: &[PromptId],
        role: Role,
    ) -> Result<Self> {
        let mut policy = Policy::new(vocab, order, PolicyKind::SoftmaxTrainable, role);
        for &prompt in prompts {
            for window in context_windows(vocab, order, horizon) {
                policy.insert(prompt, window, vec![0.0; vocab.size()])?;
            }
        }
        Ok(policy)
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_frozen(&self) -> bool {
        self.kind == PolicyKind::TabularFrozen
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn into_frozen(mut self) -> Self {
        self.kind = PolicyKind::TabularFrozen;
        self
    }

    pub fn into_trainable(mut self) -> Self {
        self.kind = PolicyKind::SoftmaxTrainable;
        self.uniform_fallback = false;
        self
    }

    /// Frozen copy that evaluates contexts it has never seen as uniform.
    ///
    /// This mirrors how a trainable student expands its table, so a snapshot of
    /// the student's initial state stays evaluable wherever the student goes.
    pub fn snapshot(&self, role: Role) -> Self {
        let mut p = self.clone().into_frozen().with_role(role);
        p.uniform_fallback = true;
        p
    }

    pub fn has_uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }

    pub fn window<'a>(&self, context: &'a [TokenId]) -> &'a [TokenId] {
        let n = context.len();
        if n <= self.order {
            context
        } else {
            &context[n - self.order..]
        }
    }

    /// Inserts or overwrites the logits of one context window.
    pub fn insert(&mut self, prompt: PromptId, window: Vec<TokenId>, logits: Vec<f64>) -> Result<usize> {
        if self.is_frozen() {
            return Err(Error::FrozenPolicy);
        }
        if window.len() > self.order {
            return Err(Error::ShapeMismatch(format!(
                "window of length {} exceeds order {}",
                window.len(),
                self.order
            )));
        }
        if logits.len() != self.vocab.size() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} logits, got {}",
                self.vocab.size(),
                logits.len()
            )));
        }
        if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
            return Err(Error::NonFinite(format!("logit {bad}")));
        }
        if let Some(tok) = window.iter().find(|&&t| t as usize >= self.vocab.size()) {
            return Err(Error::ShapeMismatch(format!("token {tok} out of vocab")));
        }
        let v = self.vocab.size();
        let by_prompt = self.index.entry(prompt).or_default();
        if let Some(&slot) = by_prompt.get(&window) {
            self.params[slot * v..(slot + 1) * v].copy_from_slice(&logits);
            return Ok(slot);
        }
        let slot = self.slots.len();
        by_prompt.insert(window.clone(), slot);
        self.slots.push(ContextKey { prompt, window });
        self.params.extend_from_slice(&logits);
        Ok(slot)
    }

    /// Slot of the context, adding a uniform one if absent. Trainable policies only.
    pub fn ensure_context(&mut self, prompt: PromptId, context: &[TokenId]) -> Result<usize> {
        if let Some(slot) = self.slot(prompt, context) {
            return Ok(slot);
        }
        let window = self.window(context).to_vec();
        self.insert(prompt, window, vec![0.0; self.vocab.size()])
    }

    pub fn slot(&self, prompt: PromptId, context: &[TokenId]) -> Option<usize> {
        let window = self.window(context);
        self.index.get(&prompt)?.get(window).copied()
    }

    fn missing(&self, prompt: PromptId, context: &[TokenId]) -> Error {
        Error::MissingContext {
            prompt,
            context: self.window(context).to_vec(),
        }
    }

    pub fn slot_logits(&self, slot: usize) -> &[f64] {
        let v = self.vocab.size();
        &self.params[slot * v..(slot + 1) * v]
    }

    pub fn logits(&self, prompt: PromptId, context: &[TokenId]) -> Result<&[f64]> {
        match self.slot(prompt, context) {
            Some(slot) => Ok(self.slot_logits(slot)),
            None => Err(self.missing(prompt, context)),
        }
    }

    /// Next-token log-probabilities at a context.
    pub fn log_probs(&self, prompt: PromptId, context: &[TokenId]) -> Result<Vec<f64>> {
        match self.slot(prompt, context) {
            Some(slot) => Ok(log_softmax(self.slot_logits(slot))),
            None if self.uniform_fallback => {
                Ok(vec![-(self.vocab.size() as f64).ln(); self.vocab.size()])
            }
            None => Err(self.missing(prompt, context)),
        }
    }

    pub fn logprob_token(&self, prompt: PromptId, context: &[TokenId], token: TokenId) -> Result<f64> {
        if token as usize >= self.vocab.size() {
            return Err(Error::ShapeMismatch(format!("token {token} out of vocab")));
        }
        Ok(self.log_probs(prompt, context)?[token as usize])
    }

    /// Per-position `log π(y_t | x, y_<t)`.
    pub fn token_logprobs(&self, trajectory: &Trajectory) -> Result<Vec<f64>> {
        trajectory
            .steps()
            .map(|(ctx, tok)| self.logprob_token(trajectory.prompt, ctx, tok))
            .collect()
    }

    /// `log π(y | x)`, summed left to right.
    pub fn logprob_sequence(&self, trajectory: &Trajectory) -> Result<f64> {
        let mut total = 0.0;
        for lp in self.token_logprobs(trajectory)? {
            total += lp;
        }
        Ok(total)
    }

    pub fn token_entropy(&self, prompt: PromptId, context: &[TokenId]) -> Result<f64> {
        Ok(entropy_of(&self.log_probs(prompt, context)?))
    }

    /// Draws one response token by token until EOS or `horizon`.
    pub fn sample<R: Rng + ?Sized>(&self, prompt: PromptId, horizon: usize, rng: &mut R) -> Result<Trajectory> {
        let mut tokens = Vec::with_capacity(horizon);
        while tokens.len() < horizon {
            let lp = self.log_probs(prompt, &tokens)?;
            let tok = draw(&lp, rng);
            tokens.push(tok);
            if tok == self.vocab.eos() {
                break;
            }
        }
        Ok(Trajectory { prompt, tokens })
    }

    /// Like [`Policy::sample`], adding uniform slots for unseen contexts first.
    pub fn sample_expanding<R: Rng + ?Sized>(
        &mut self,
        prompt: PromptId,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut tokens = Vec::with_capacity(horizon);
        while tokens.len() < horizon {
            let slot = self.ensure_context(prompt, &tokens)?;
            let lp = log_softmax(self.slot_logits(slot));
            let tok = draw(&lp, rng);
            tokens.push(tok);
            if tok == self.vocab.eos() {
                break;
            }
        }
        Ok(Trajectory { prompt, tokens })
    }

    pub fn sample_trajectory(&self, prompt: PromptId, horizon: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(prompt, horizon, &mut rng)
    }

    /// Greedy decoding; ties go to the lowest token id.
    pub fn greedy(&self, prompt: PromptId, horizon: usize) -> Result<Trajectory> {
        let mut tokens = Vec::with_capacity(horizon);
        while tokens.len() < horizon {
            let lp = self.log_probs(prompt, &tokens)?;
            let mut best = 0;
            for (i, &v) in lp.iter().enumerate() {
                if v > lp[best] {
                    best = i;
                }
            }
            let tok = best as TokenId;
            tokens.push(tok);
            if tok == self.vocab.eos() {
                break;
            }
        }
        Ok(Trajectory { prompt, tokens })
    }

    pub fn prompts(&self) -> impl Iterator<Item = PromptId> + '_ {
        self.index.keys().copied()
    }

    pub fn slots(&self) -> &[ContextKey] {
        &self.slots
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Result<&mut [f64]> {
        if self.is_frozen() {
            return Err(Error::FrozenPolicy);
        }
        Ok(&mut self.params)
    }

    pub fn same_layout(&self, other: &Policy) -> bool {
        self.vocab == other.vocab && self.order == other.order && self.slots == other.slots
    }

    /// Copy with the same layout and a replacement parameter vector.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Policy> {
        if params.len() != self.params.len() {
            return Err(Error::LayoutMismatch(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {bad}")));
        }
        let mut p = self.clone();
        p.params = params;
        Ok(p)
    }
}

/// Windows reachable by an order-`order` policy within `horizon`: every EOS-free
/// string of length `0..=min(order, horizon - 1)`.
pub fn context_windows(vocab: Vocab, order: usize, horizon: usize) -> Vec<Vec<TokenId>> {
    let max_len = order.min(horizon.saturating_sub(1));
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<TokenId>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for tok in vocab.symbols() {
                let mut x = w.clone();
                x.push(tok);
                next.push(x);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn draw<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = i;
        }
        cum += p;
        if u < cum {
            return i as TokenId;
        }
    }
    last_positive as TokenId
}
