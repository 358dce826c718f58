//! Per-layer abstraction profile: how strongly activations agree between
//! two lines that share their exact text but not their logic (Identical),
//! versus two lines that share their logic but not their text
//! (Isomorphic).

use std::collections::{BTreeMap, HashMap};

use apz_core::isomorphism::{traces_isomorphic, IsomorphismKey};
use apz_core::solver::ReasoningTrace;
use apz_core::tokenize::{covering_tokens, CharOffsets, TokenSpan};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::store::Activations;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Identical,
    Isomorphic,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Identical => "identical",
            Condition::Isomorphic => "isomorphic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRef {
    pub puzzle_id: String,
    pub step_index: usize,
    /// Indices into the puzzle's activation rows.
    pub tokens: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinePair {
    pub condition: Condition,
    pub left: LineRef,
    pub right: LineRef,
}

/// One puzzle's trace together with the text and tokens its activations
/// were captured over.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub puzzle_id: String,
    pub key: IsomorphismKey,
    pub trace: ReasoningTrace,
    pub text: String,
    pub token_spans: Vec<TokenSpan>,
}

/// Token indices of each step's line, found by searching the step texts
/// in order through `text`. `None` for a step whose text is missing.
pub fn locate_lines(trace: &ReasoningTrace, text: &str, spans: &[TokenSpan]) -> Vec<Option<Vec<usize>>> {
    let offsets = CharOffsets::new(text);
    let mut cursor = 0;
    trace
        .steps
        .iter()
        .map(|step| {
            let at = cursor + text[cursor..].find(&step.text)?;
            cursor = at + step.text.len();
            let (first, last) = covering_tokens(spans, offsets.char(at), offsets.char(cursor))?;
            Some((first..=last).collect())
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub pairs: Vec<LinePair>,
    pub eligible: usize,
    /// Candidate pairs dropped because the two lines differ in token count.
    pub excluded_token_mismatch: usize,
    /// Steps whose text could not be found in their sidecar text.
    pub unlocated_lines: usize,
    /// How many fewer pairs than requested were returned.
    pub shortfall: usize,
}

struct Indexed<'a> {
    entries: &'a [CorpusEntry],
    lines: Vec<Vec<Option<Vec<usize>>>>,
}

impl Indexed<'_> {
    fn line(&self, e: usize, s: usize) -> LineRef {
        LineRef {
            puzzle_id: self.entries[e].puzzle_id.clone(),
            step_index: s,
            tokens: self.lines[e][s].clone().expect("located"),
        }
    }

    /// Calls `visit` on every eligible pair in a fixed order; returns the
    /// count of token-mismatch exclusions.
    fn for_each(&self, condition: Condition, mut visit: impl FnMut(usize, usize, usize, usize)) -> usize {
        let mut excluded = 0;
        let tokens = |e: usize, s: usize| self.lines[e][s].as_ref().map(Vec::len);
        match condition {
            Condition::Identical => {
                let mut by_text: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
                for (e, entry) in self.entries.iter().enumerate() {
                    for (s, step) in entry.trace.steps.iter().enumerate() {
                        if self.lines[e][s].is_some() {
                            by_text.entry(step.text.as_str()).or_default().push((e, s));
                        }
                    }
                }
                for group in by_text.values() {
                    for (i, &(ea, sa)) in group.iter().enumerate() {
                        for &(eb, sb) in &group[i + 1..] {
                            if sa == sb || self.entries[ea].key == self.entries[eb].key {
                                continue;
                            }
                            if tokens(ea, sa) != tokens(eb, sb) {
                                excluded += 1;
                                continue;
                            }
                            visit(ea, sa, eb, sb);
                        }
                    }
                }
            }
            Condition::Isomorphic => {
                let mut classes: BTreeMap<&IsomorphismKey, Vec<usize>> = BTreeMap::new();
                for (e, entry) in self.entries.iter().enumerate() {
                    classes.entry(&entry.key).or_default().push(e);
                }
                for members in classes.values() {
                    for (i, &ea) in members.iter().enumerate() {
                        for &eb in &members[i + 1..] {
                            let (ta, tb) = (&self.entries[ea].trace, &self.entries[eb].trace);
                            if traces_isomorphic(ta, tb).is_none() {
                                continue;
                            }
                            for s in 0..ta.steps.len() {
                                if ta.steps[s].text == tb.steps[s].text {
                                    continue;
                                }
                                match (tokens(ea, s), tokens(eb, s)) {
                                    (Some(x), Some(y)) if x == y => visit(ea, s, eb, s),
                                    (Some(_), Some(_)) => excluded += 1,
                                    _ => {}
                                }
                            }
                        }
                    }
                }
            }
        }
        excluded
    }
}

/// Draws up to `k` eligible pairs without replacement.
///
/// Identical: byte-equal step texts from puzzles with different keys at
/// different step indices. Isomorphic: corresponding steps of two traces
/// related by [`traces_isomorphic`] whose texts differ. Either way the two
/// lines must cover the same number of tokens.
pub fn sample_line_pairs(entries: &[CorpusEntry], condition: Condition, k: usize, seed: u64) -> Result<Sample> {
    let lines: Vec<_> = entries.iter().map(|e| locate_lines(&e.trace, &e.text, &e.token_spans)).collect();
    let unlocated_lines = lines.iter().flatten().filter(|l| l.is_none()).count();
    let idx = Indexed { entries, lines };

    let mut eligible = 0;
    let excluded_token_mismatch = idx.for_each(condition, |_, _, _, _| eligible += 1);
    if eligible == 0 {
        return Err(ProbeError::NoEligiblePairs(format!(
            "{} condition over {} puzzles ({excluded_token_mismatch} excluded for token-count mismatch, \
             {unlocated_lines} lines not found)",
            condition.as_str(),
            entries.len()
        )));
    }
    let take = k.min(eligible);
    let mut chosen = index::sample(&mut apz_core::rng::rng(seed), eligible, take).into_vec();
    chosen.sort_unstable();

    let mut pairs = Vec::with_capacity(take);
    let mut next = chosen.iter().peekable();
    let mut i = 0;
    idx.for_each(condition, |ea, sa, eb, sb| {
        if next.peek() == Some(&&i) {
            next.next();
            pairs.push(LinePair { condition, left: idx.line(ea, sa), right: idx.line(eb, sb) });
        }
        i += 1;
    });
    Ok(Sample { pairs, eligible, excluded_token_mismatch, unlocated_lines, shortfall: k - take })
}

/// Checks every pair against its condition's definition, independently of
/// how it was sampled. Returns a description of each violation.
pub fn audit_pairs(pairs: &[LinePair], entries: &[CorpusEntry]) -> Vec<String> {
    let by_id: HashMap<&str, &CorpusEntry> = entries.iter().map(|e| (e.puzzle_id.as_str(), e)).collect();
    let mut problems = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let (Some(a), Some(b)) = (by_id.get(p.left.puzzle_id.as_str()), by_id.get(p.right.puzzle_id.as_str())) else {
            problems.push(format!("pair {i}: unknown puzzle"));
            continue;
        };
        let (Some(sa), Some(sb)) = (a.trace.steps.get(p.left.step_index), b.trace.steps.get(p.right.step_index)) else {
            problems.push(format!("pair {i}: step out of range"));
            continue;
        };
        if p.left.tokens.len() != p.right.tokens.len() {
            problems.push(format!("pair {i}: token counts differ"));
        }
        match p.condition {
            Condition::Identical => {
                if sa.text != sb.text || a.key == b.key || p.left.step_index == p.right.step_index {
                    problems.push(format!("pair {i}: not an identical-text pair"));
                }
            }
            Condition::Isomorphic => {
                let ok = a.key == b.key
                    && p.left.step_index == p.right.step_index
                    && sa.text != sb.text
                    && traces_isomorphic(&a.trace, &b.trace).is_some_and(|sub| {
                        sub.apply_to_detail(&sa.detail)
                            == apz_core::isomorphism::Substitution::default().apply_to_detail(&sb.detail)
                    });
                if !ok {
                    problems.push(format!("pair {i}: not an isomorphic pair"));
                }
            }
        }
    }
    problems
}

/// Product-moment correlation, or `None` when either side has zero
/// variance.
pub fn pearson_checked(u: &[f64], v: &[f64]) -> Result<Option<f64>> {
    if u.len() != v.len() {
        return Err(ProbeError::Shape(format!("correlating {} against {} values", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(ProbeError::Shape("correlation needs at least 2 values".into()));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 || svv == 0.0 {
        return Ok(None);
    }
    Ok(Some((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0)))
}

/// [`pearson_checked`] with zero variance read as 0.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(pearson_checked(u, v)?.unwrap_or(0.0))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionStat {
    /// Mean over pairs of the per-pair mean token correlation.
    pub mean: Option<f64>,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: usize,
    pub identical: ConditionStat,
    pub isomorphic: ConditionStat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AbstractionProfile {
    pub rows: Vec<LayerRow>,
    /// Pairs skipped because a tensor was missing or too small.
    pub dropped_pairs: usize,
    /// Token correlations taken as 0 because of zero variance.
    pub zero_variance: usize,
}

/// Per-layer two-stage mean correlation for each condition.
pub fn layer_profile(
    pairs: &[LinePair],
    tensors: &HashMap<String, Activations>,
    layers: &[usize],
) -> AbstractionProfile {
    let resolve = |r: &LineRef| {
        tensors.get(&r.puzzle_id).filter(|a| r.tokens.iter().all(|&t| t < a.n_tokens) && layers.iter().all(|&l| l < a.n_layers))
    };
    let mut profile = AbstractionProfile::default();
    let usable: Vec<(&LinePair, &Activations, &Activations)> = pairs
        .iter()
        .filter_map(|p| match (resolve(&p.left), resolve(&p.right)) {
            (Some(a), Some(b)) if a.hidden_dim == b.hidden_dim && a.hidden_dim >= 2 => Some((p, a, b)),
            _ => {
                profile.dropped_pairs += 1;
                None
            }
        })
        .collect();
    let (mut u, mut v) = (Vec::new(), Vec::new());
    for &layer in layers {
        let mut sums: BTreeMap<Condition, (f64, usize)> = BTreeMap::new();
        for &(p, a, b) in &usable {
            let mut line_sum = 0.0;
            for (&ta, &tb) in p.left.tokens.iter().zip(&p.right.tokens) {
                u.clear();
                v.clear();
                u.extend(a.vector(ta, layer).iter().map(|&x| x as f64));
                v.extend(b.vector(tb, layer).iter().map(|&x| x as f64));
                match pearson_checked(&u, &v).expect("equal lengths >= 2") {
                    Some(r) => line_sum += r,
                    None => profile.zero_variance += 1,
                }
            }
            let line_mean = line_sum / p.left.tokens.len().max(1) as f64;
            let s = sums.entry(p.condition).or_default();
            s.0 += line_mean;
            s.1 += 1;
        }
        let stat = |c| {
            let (sum, n) = sums.get(&c).copied().unwrap_or_default();
            ConditionStat { mean: (n > 0).then(|| sum / n as f64), pairs: n }
        };
        profile.rows.push(LayerRow {
            layer,
            identical: stat(Condition::Identical),
            isomorphic: stat(Condition::Isomorphic),
        });
    }
    profile
}
