//! Synthetic activations with known, planted structure.
//!
//! For token `t` on line `k` at layer `l`:
//!
//! ```text
//! x = w_token(l)·E[token key] + w_role(l)·E[role key]
//!   + w_correct(l)·sign(t)·d + noise(l)·z/√hidden_dim
//! ```
//!
//! `E[..]` are seeded random unit vectors, `d` is one random unit direction
//! per seed, `sign` is +1 / −1 inside Correct / Incorrect statements and 0
//! elsewhere, and `z` is standard normal. The role key is (step index,
//! template id, token position in the line), so two isomorphic traces
//! agree on it line for line while equal sentences at different steps do
//! not. The token key is either the token text alone or, by default, the
//! token text together with every earlier token on its line: a crude
//! contextual embedding under which byte-equal lines produce identical
//! vectors while a renamed line diverges from its first substituted token
//! onwards.

use std::collections::HashMap;

use apz_core::isomorphism::Substitution;
use apz_core::parser::{Label, LabeledStatement};
use apz_core::puzzle::claim_holds;
use apz_core::rng::{rng, stage_seed};
use apz_core::solver::{ReasoningStep, ReasoningTrace};
use apz_core::text::{render_step, StepDetail};
use apz_core::tokenize::{CharOffsets, TokenSpan};
use apz_core::Puzzle;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::store::Activations;

pub const MIN_HIDDEN_DIM: usize = 8;

/// Component weights for one layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerMix {
    pub token: f64,
    pub role: f64,
    pub correctness: f64,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenContext {
    /// The token's own text.
    Isolated,
    /// The token's text plus all earlier tokens on the same line.
    #[default]
    LinePrefix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub hidden_dim: usize,
    /// One entry per layer.
    pub layers: Vec<LayerMix>,
    #[serde(default)]
    pub token_context: TokenContext,
}

impl SyntheticSpec {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Correctness planted at `weight` in `planted` layers only; every
    /// layer also carries token and role components and the same noise.
    pub fn planted_correctness(
        seed: u64,
        n_layers: usize,
        hidden_dim: usize,
        planted: std::ops::RangeInclusive<usize>,
        weight: f64,
        noise: f64,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|l| LayerMix {
                token: 1.0,
                role: 1.0,
                correctness: if planted.contains(&l) { weight } else { 0.0 },
                noise,
            })
            .collect();
        SyntheticSpec { seed, hidden_dim, layers, token_context: TokenContext::LinePrefix }
    }

    /// Layer 0 carries token identity only, layer 1 step role only.
    pub fn token_then_role(seed: u64, hidden_dim: usize, noise: f64) -> Self {
        let layers = vec![
            LayerMix { token: 1.0, noise, ..Default::default() },
            LayerMix { role: 1.0, noise, ..Default::default() },
        ];
        SyntheticSpec { seed, hidden_dim, layers, token_context: TokenContext::LinePrefix }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < MIN_HIDDEN_DIM {
            return Err(ProbeError::Config(format!(
                "hidden_dim {} is below the minimum of {MIN_HIDDEN_DIM}",
                self.hidden_dim
            )));
        }
        if self.layers.is_empty() {
            return Err(ProbeError::Config("at least one layer is required".into()));
        }
        for (l, m) in self.layers.iter().enumerate() {
            for (what, v) in [("token", m.token), ("role", m.role), ("correctness", m.correctness), ("noise", m.noise)]
            {
                if !v.is_finite() || v < 0.0 {
                    return Err(ProbeError::Config(format!("layer {l}: {what} weight {v} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// The seeded unit vector for an arbitrary key.
pub fn embedding(seed: u64, key: &str, dim: usize) -> Vec<f64> {
    let mut r = rng(stage_seed(seed, key));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn correctness_direction(spec: &SyntheticSpec) -> Vec<f64> {
    embedding(spec.seed, "correctness-direction", spec.hidden_dim)
}

/// Line number and position within the line for each token; lines are
/// separated by `\n`.
fn token_lines(text: &str, spans: &[TokenSpan]) -> Vec<(usize, usize)> {
    let mut line_starts = vec![0usize];
    for (i, ch) in text.chars().enumerate() {
        if ch == '\n' {
            line_starts.push(i + 1);
        }
    }
    let mut out = Vec::with_capacity(spans.len());
    let mut prev = (usize::MAX, 0);
    for s in spans {
        let line = line_starts.partition_point(|&st| st <= s.start) - 1;
        let pos = if line == prev.0 { prev.1 + 1 } else { 0 };
        prev = (line, pos);
        out.push(prev);
    }
    out
}

/// Activations for one rendered trace. `text` is the trace text the
/// `spans` tokenize (line `k` is step `k`, later lines share one "final"
/// role), and `labels` carry token ranges into `spans`.
pub fn synthesize_activations(
    spec: &SyntheticSpec,
    trace: &ReasoningTrace,
    text: &str,
    spans: &[TokenSpan],
    labels: &[LabeledStatement],
) -> Result<Activations> {
    spec.validate()?;
    let dim = spec.hidden_dim;
    let n_layers = spec.n_layers();
    let offsets = CharOffsets::new(text);
    if spans.iter().any(|s| s.end > offsets.char_len() || s.start >= s.end) {
        return Err(ProbeError::Shape("token span outside the text".into()));
    }
    let token_text = |s: &TokenSpan| &text[offsets.byte(s.start)..offsets.byte(s.end)];

    let mut sign = vec![0.0f64; spans.len()];
    for st in labels {
        let (first, last) = st
            .token_range
            .ok_or_else(|| ProbeError::Shape("labeled statement without a token range".into()))?;
        if last >= spans.len() {
            return Err(ProbeError::Shape(format!("token range {first}..={last} beyond {} tokens", spans.len())));
        }
        let s = if st.label == Label::Correct { 1.0 } else { -1.0 };
        sign[first..=last].iter_mut().for_each(|x| *x = s);
    }

    let direction = correctness_direction(spec);
    let mut cache: HashMap<String, Vec<f64>> = HashMap::new();
    let mut embed = |key: String| -> Vec<f64> {
        cache.entry(key).or_insert_with_key(|k| embedding(spec.seed, k, dim)).clone()
    };
    let mut noise_rng = rng(stage_seed(spec.seed, &format!("noise:{}", trace.puzzle_id)));
    let noise_scale = 1.0 / (dim as f64).sqrt();

    let lines = token_lines(text, spans);
    let mut out = Activations::zeros(spans.len(), n_layers, dim);
    let mut prefix = String::new();
    for (t, span) in spans.iter().enumerate() {
        let (line, pos) = lines[t];
        if pos == 0 {
            prefix.clear();
        }
        prefix.push_str(token_text(span));
        prefix.push('\u{1f}');
        let token_key = match spec.token_context {
            TokenContext::Isolated => format!("token:{}", token_text(span)),
            TokenContext::LinePrefix => format!("token:{prefix}"),
        };
        let role_key = match trace.steps.get(line) {
            Some(step) => format!("role:{line}:{}:{pos}", step.detail.template_id()),
            None => format!("role:final:{pos}"),
        };
        let e_tok = embed(token_key);
        let e_role = embed(role_key);
        for (l, mix) in spec.layers.iter().enumerate() {
            let v = out.vector_mut(t, l);
            for d in 0..dim {
                let z: f64 = noise_rng.sample(StandardNormal);
                let x = mix.token * e_tok[d]
                    + mix.role * e_role[d]
                    + mix.correctness * sign[t] * direction[d]
                    + mix.noise * noise_scale * z;
                v[d] = x as f32;
            }
        }
    }
    Ok(out)
}

/// Introduces wrong statements: each claim-bearing step is, with
/// probability `rate`, rewritten by replacing one name with another name
/// (or one color with another color) of the same puzzle, chosen among the
/// replacements that make the claim false. Returns the new trace and the
/// number of rewritten steps.
pub fn perturb_trace(trace: &ReasoningTrace, puzzle: &Puzzle, rate: f64, seed: u64) -> Result<(ReasoningTrace, usize)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(ProbeError::Config(format!("perturbation rate {rate} outside [0, 1]")));
    }
    let u = puzzle.universe();
    let n = u.n();
    let mut r = rng(stage_seed(seed, &format!("perturb:{}", trace.puzzle_id)));
    let mut out = trace.clone();
    let mut changed = 0;
    for step in &mut out.steps {
        if !matches!(step.claim, Some(ref c) if *c != apz_core::Claim::Done) {
            continue;
        }
        if !r.random_bool(rate) {
            continue;
        }
        let mut candidates: Vec<StepDetail> = Vec::new();
        let swaps = |items: &[String]| -> Vec<(String, String)> {
            let mut v = Vec::new();
            for a in items {
                for b in items {
                    if a != b {
                        v.push((a.clone(), b.clone()));
                    }
                }
            }
            v
        };
        for (a, b) in swaps(&u.names) {
            let mut sub = Substitution::default();
            sub.names.insert(a, b);
            candidates.push(sub.apply_to_detail(&step.detail));
        }
        for (a, b) in swaps(&u.colors) {
            let mut sub = Substitution::default();
            sub.colors.insert(a, b);
            candidates.push(sub.apply_to_detail(&step.detail));
        }
        let mut falsifying = Vec::new();
        for d in candidates {
            if d == step.detail || falsifying.contains(&d) {
                continue;
            }
            if let Some(c) = d.claim() {
                if !claim_holds(&c, &puzzle.solution, &u)? {
                    falsifying.push(d);
                }
            }
        }
        if falsifying.is_empty() {
            continue;
        }
        let detail = falsifying.swap_remove(r.random_range(0..falsifying.len()));
        *step = ReasoningStep {
            index: step.index,
            text: render_step(&detail, n),
            claim: detail.claim(),
            kind: step.kind,
            detail,
        };
        changed += 1;
    }
    Ok((out, changed))
}
