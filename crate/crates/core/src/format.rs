//! Line-oriented policy serialization.
//!
//! ```text
//! policy v1 vocab=<n> eos=<id> order=<k>
//! <prompt_id> <ctx tokens comma-separated or "-"> <logits space-separated>
//! ```
//!
//! Floats are written with the shortest representation that parses back to the
//! same bits, so a save/load cycle is exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyKind, PromptId, Role, TokenId, Vocab};

pub const POLICY_HEADER: &str = "policy v1";

pub fn write_f64(out: &mut String, x: f64) {
    // Debug prints the shortest round-tripping form and switches to
    // exponent notation for very large or small magnitudes.
    write!(out, "{x:?}").expect("writing to a String cannot fail");
}

pub fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::parse(line, format!("bad float `{s}`: {e}")))
}

pub fn policy_to_string(policy: &Policy) -> String {
    let mut out = String::new();
    let vocab = policy.vocab();
    writeln!(
        out,
        "{POLICY_HEADER} vocab={} eos={} order={}",
        vocab.size(),
        vocab.eos(),
        policy.order()
    )
    .unwrap();
    for (slot, key) in policy.slots().iter().enumerate() {
        write!(out, "{} ", key.prompt.0).unwrap();
        if key.window.is_empty() {
            out.push('-');
        } else {
            let toks: Vec<String> = key.window.iter().map(|t| t.to_string()).collect();
            out.push_str(&toks.join(","));
        }
        for &l in policy.slot_logits(slot) {
            out.push(' ');
            write_f64(&mut out, l);
        }
        out.push('\n');
    }
    out
}

/// Parses a policy; returns it and the number of lines consumed.
///
/// Parsing stops at the first line that does not start with a digit, so a
/// policy block can be followed by other sections (see checkpoints).
pub fn parse_policy_block(text: &str, kind: PolicyKind, role: Role) -> Result<(Policy, usize)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty policy text"))?;
    let rest = header
        .strip_prefix(POLICY_HEADER)
        .ok_or_else(|| Error::parse(1, format!("expected `{POLICY_HEADER}` header")))?;
    let mut size = None;
    let mut eos = None;
    let mut order = None;
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("bad header field `{field}`")))?;
        let n: usize = v
            .parse()
            .map_err(|_| Error::parse(1, format!("bad header value `{field}`")))?;
        match k {
            "vocab" => size = Some(n),
            "eos" => eos = Some(n as TokenId),
            "order" => order = Some(n),
            _ => return Err(Error::parse(1, format!("unknown header field `{k}`"))),
        }
    }
    let (Some(size), Some(eos), Some(order)) = (size, eos, order) else {
        return Err(Error::parse(1, "header needs vocab, eos and order"));
    };
    let vocab = Vocab::new(size, eos).map_err(|e| Error::parse(1, e.to_string()))?;
    let mut policy = Policy::new(vocab, order, PolicyKind::SoftmaxTrainable, role);
    let mut consumed = 1;
    for (i, line) in lines {
        let lineno = i + 1;
        if !line.starts_with(|c: char| c.is_ascii_digit()) {
            break;
        }
        consumed = lineno;
        let mut parts = line.split_whitespace();
        let prompt: u32 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "bad prompt id"))?;
        let ctx = parts
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing context"))?;
        let window: Vec<TokenId> = if ctx == "-" {
            Vec::new()
        } else {
            ctx.split(',')
                .map(|t| {
                    t.parse::<TokenId>()
                        .map_err(|_| Error::parse(lineno, format!("bad token `{t}`")))
                })
                .collect::<Result<_>>()?
        };
        let logits: Vec<f64> = parts.map(|s| parse_f64(lineno, s)).collect::<Result<_>>()?;
        policy
            .insert(PromptId(prompt), window, logits)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
    }
    let policy = match kind {
        PolicyKind::TabularFrozen => policy.into_frozen(),
        PolicyKind::SoftmaxTrainable => policy,
    };
    Ok((policy, consumed))
}

pub fn policy_from_str(text: &str, kind: PolicyKind, role: Role) -> Result<Policy> {
    let (policy, consumed) = parse_policy_block(text, kind, role)?;
    if let Some((i, line)) = text
        .lines()
        .enumerate()
        .skip(consumed)
        .find(|(_, l)| !l.trim().is_empty())
    {
        return Err(Error::parse(i + 1, format!("unexpected line `{line}`")));
    }
    Ok(policy)
}
