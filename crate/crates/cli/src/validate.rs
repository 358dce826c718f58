//! Re-checks a run directory from its files alone.
//!
//! Cheap checks (digests, split disjointness, activation headers) cover
//! every file; the oracle, trace and label recomputations run on a seeded
//! sample of puzzles. Failures are report content, never errors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use apz_core::isomorphism::{canonical_key, Split};
use apz_core::parser::StatementParser;
use apz_core::rng::{rng, stage_seed};
use apz_core::solve_with_trace;
use apz_probe::store::{parse_header, Activations, Sidecar};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ValidateConfig;
use crate::io::read_bytes;
use crate::manifest::RunManifest;
use crate::records::*;
use crate::stages::{key_digest, parse_jsonl, Versioned};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The files the check needs are not part of this run.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    /// Items examined.
    pub checked: usize,
    pub failures: Vec<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        CheckResult { name: name.into(), status: Status::Pass, checked: 0, failures: Vec::new() }
    }

    fn skip(name: &str, why: impl Into<String>) -> Self {
        CheckResult { name: name.into(), status: Status::Skip, checked: 0, failures: vec![why.into()] }
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.status = Status::Fail;
        self.failures.push(msg.into());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failed() == 0
    }

    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            writeln!(f, "{tag} {:<20} {} checked", c.name, c.checked)?;
            for msg in c.failures.iter().take(20) {
                writeln!(f, "     {msg}")?;
            }
            if c.failures.len() > 20 {
                writeln!(f, "     ... {} more", c.failures.len() - 20)?;
            }
        }
        Ok(())
    }
}

pub const CHECKS: [&str; 8] =
    ["manifest", "digests", "puzzle_oracle", "traces", "split_disjointness", "activation_headers", "labels", "records"];

/// Loads one record file if present, noting schema problems in `records`.
fn load<T: serde::de::DeserializeOwned + Versioned>(dir: &Path, rel: &str, records: &mut CheckResult) -> Option<Vec<T>> {
    let path = dir.join(rel);
    if !path.exists() {
        return None;
    }
    records.checked += 1;
    match read_bytes(&path).map_err(|e| e.to_string()).and_then(|b| parse_jsonl(&b, rel).map_err(|e| e.to_string())) {
        Ok(v) => Some(v),
        Err(e) => {
            records.fail(e);
            None
        }
    }
}

pub fn validate_corpus(dir: &Path, opts: &ValidateConfig, seed: u64) -> ValidationReport {
    let mut checks = Vec::new();
    let manifest = match RunManifest::load(dir) {
        Ok(m) => {
            let mut c = CheckResult::new("manifest");
            c.checked = m.stages.len();
            checks.push(c);
            m
        }
        Err(e) => {
            let mut c = CheckResult::new("manifest");
            c.fail(e.to_string());
            checks.push(c);
            for name in &CHECKS[1..] {
                checks.push(CheckResult::skip(name, "no readable manifest"));
            }
            return ValidationReport { checks };
        }
    };
    checks.push(digests(dir, &manifest));

    let mut records = CheckResult::new("records");
    let puzzles: Option<Vec<PuzzleRecord>> = load(dir, PUZZLES, &mut records);
    let traces: Option<Vec<TraceRecord>> = load(dir, TRACES, &mut records);
    let labels: Option<Vec<LabelRecord>> = load(dir, LABELS, &mut records);
    let split: Option<Vec<SplitLine>> = load(dir, SPLIT, &mut records);
    let sidecars: Option<Vec<Sidecar>> = load(dir, SIDECARS, &mut records);

    let sample = match &puzzles {
        Some(p) => {
            let k = opts.sample.min(p.len());
            let mut idx = index::sample(&mut rng(stage_seed(seed, "validate")), p.len(), k).into_vec();
            idx.sort_unstable();
            idx
        }
        None => Vec::new(),
    };

    checks.push(match &puzzles {
        Some(p) => oracle(p, &sample),
        None => CheckResult::skip("puzzle_oracle", format!("no {PUZZLES}")),
    });
    checks.push(match (&puzzles, &traces) {
        (Some(p), Some(t)) => trace_check(p, t, &sample),
        _ => CheckResult::skip("traces", format!("needs {PUZZLES} and {TRACES}")),
    });
    checks.push(match (&puzzles, &split) {
        (Some(p), Some(s)) => disjointness(p, s),
        _ => CheckResult::skip("split_disjointness", format!("needs {PUZZLES} and {SPLIT}")),
    });
    checks.push(match &sidecars {
        Some(s) => headers(dir, s),
        None => CheckResult::skip("activation_headers", format!("no {SIDECARS}")),
    });
    checks.push(match (&puzzles, &sidecars, &labels) {
        (Some(p), Some(s), Some(l)) => label_check(p, s, l, &sample),
        _ => CheckResult::skip("labels", format!("needs {PUZZLES}, {SIDECARS} and {LABELS}")),
    });
    checks.push(records);
    ValidationReport { checks }
}

fn digests(dir: &Path, m: &RunManifest) -> CheckResult {
    let mut c = CheckResult::new("digests");
    for (path, entry) in m.current_outputs() {
        c.checked += 1;
        match read_bytes(&dir.join(path)) {
            Ok(bytes) => {
                let actual = crate::io::sha256_hex(&bytes);
                if actual != entry.sha256 {
                    c.fail(format!("{path}: sha256 {actual}, manifest records {}", entry.sha256));
                }
            }
            Err(e) => c.fail(format!("{path}: {e}")),
        }
    }
    c
}

fn oracle(puzzles: &[PuzzleRecord], sample: &[usize]) -> CheckResult {
    let mut c = CheckResult::new("puzzle_oracle");
    let mut ids = BTreeSet::new();
    for r in puzzles {
        if !ids.insert(&r.puzzle.id) {
            c.fail(format!("{}: duplicate id", r.puzzle.id));
        }
    }
    let failures: Vec<String> = sample
        .par_iter()
        .filter_map(|&i| puzzles[i].puzzle.verify().err().map(|e| format!("{}: {e}", puzzles[i].puzzle.id)))
        .collect();
    c.checked = sample.len();
    failures.into_iter().for_each(|f| c.fail(f));
    c
}

fn trace_check(puzzles: &[PuzzleRecord], traces: &[TraceRecord], sample: &[usize]) -> CheckResult {
    let mut c = CheckResult::new("traces");
    let by_id: HashMap<&str, &TraceRecord> = traces.iter().map(|t| (t.trace.puzzle_id.as_str(), t)).collect();
    let failures: Vec<String> = sample
        .par_iter()
        .filter_map(|&i| {
            let p = &puzzles[i].puzzle;
            let Some(t) = by_id.get(p.id.as_str()) else { return Some(format!("{}: no trace", p.id)) };
            match solve_with_trace(p) {
                Ok(fresh) if fresh == t.trace => None,
                Ok(_) => Some(format!("{}: stored trace differs from a fresh solve", p.id)),
                Err(e) => Some(format!("{}: {e}", p.id)),
            }
        })
        .collect();
    c.checked = sample.len();
    failures.into_iter().for_each(|f| c.fail(f));
    c
}

fn disjointness(puzzles: &[PuzzleRecord], split: &[SplitLine]) -> CheckResult {
    let mut c = CheckResult::new("split_disjointness");
    let keys: Vec<(&str, Result<String, String>)> = puzzles
        .par_iter()
        .map(|r| (r.puzzle.id.as_str(), canonical_key(&r.puzzle).map(|k| key_digest(&k)).map_err(|e| e.to_string())))
        .collect();
    let mut assigned: HashMap<&str, Vec<&SplitLine>> = HashMap::new();
    for s in split {
        assigned.entry(s.id.as_str()).or_default().push(s);
    }
    // recomputed key digest → (puzzle id, split) of every member
    let mut classes: BTreeMap<&str, Vec<(&str, Split)>> = BTreeMap::new();
    for (id, key) in &keys {
        c.checked += 1;
        let key = match key {
            Ok(k) => k,
            Err(e) => {
                c.fail(format!("{id}: {e}"));
                continue;
            }
        };
        match assigned.get(id).map(Vec::as_slice) {
            None | Some([]) => c.fail(format!("{id}: not assigned to any split")),
            Some([line]) => {
                if line.key_digest != *key {
                    c.fail(format!("{id}: recorded key digest does not match the puzzle"));
                }
                classes.entry(key.as_str()).or_default().push((id, line.split));
            }
            Some(_) => c.fail(format!("{id}: assigned more than once")),
        }
    }
    let known: BTreeSet<&str> = keys.iter().map(|(id, _)| *id).collect();
    for s in split {
        if !known.contains(s.id.as_str()) {
            c.fail(format!("{}: in the split file but not a known puzzle", s.id));
        }
    }
    for members in classes.values() {
        let mut tally: BTreeMap<Split, usize> = BTreeMap::new();
        for (_, s) in members {
            *tally.entry(*s).or_default() += 1;
        }
        if tally.len() < 2 {
            continue;
        }
        // Name the members outside the class's majority split; on a tie
        // every member is named.
        let top = *tally.values().max().expect("non-empty");
        let majority: Vec<Split> = tally.iter().filter(|(_, &n)| n == top).map(|(s, _)| *s).collect();
        let home = (majority.len() == 1).then(|| majority[0]);
        for (id, s) in members {
            if Some(*s) != home {
                let others: Vec<&str> = members.iter().filter(|(o, _)| o != id).map(|(o, _)| *o).collect();
                c.fail(format!(
                    "{id}: in {} but isomorphic to {} in another split",
                    s.as_str(),
                    others.join(", ")
                ));
            }
        }
    }
    c
}

fn headers(dir: &Path, sidecars: &[Sidecar]) -> CheckResult {
    let mut c = CheckResult::new("activation_headers");
    for sc in sidecars {
        c.checked += 1;
        let path = dir.join(&sc.activation_file);
        let result = read_bytes(&path)
            .map_err(|e| e.to_string())
            .and_then(|b| {
                parse_header(&b).map_err(|e| e.to_string())?;
                Activations::from_bytes(&b).map_err(|e| e.to_string())
            })
            .and_then(|a| sc.check(&a).map_err(|e| e.to_string()));
        if let Err(e) = result {
            c.fail(format!("{}: {e}", sc.activation_file));
        }
    }
    c
}

fn label_check(puzzles: &[PuzzleRecord], sidecars: &[Sidecar], labels: &[LabelRecord], sample: &[usize]) -> CheckResult {
    let mut c = CheckResult::new("labels");
    let sidecar: HashMap<&str, &Sidecar> = sidecars.iter().map(|s| (s.puzzle_id.as_str(), s)).collect();
    let mut stored: HashMap<&str, Vec<&LabelRecord>> = HashMap::new();
    for l in labels {
        stored.entry(l.puzzle_id.as_str()).or_default().push(l);
    }
    let results: Vec<Vec<String>> = sample
        .par_iter()
        .filter_map(|&i| {
            let p = &puzzles[i].puzzle;
            let sc = sidecar.get(p.id.as_str())?;
            let mut problems = Vec::new();
            let fresh = match StatementParser::new(&p.universe()).label(&sc.text, &p.solution, Some(&sc.token_spans)) {
                Ok(rep) => rep.statements,
                Err(e) => return Some(vec![format!("{}: {e}", p.id)]),
            };
            let mut have = stored.get(p.id.as_str()).cloned().unwrap_or_default();
            have.sort_by_key(|l| l.statement_index);
            if have.len() != fresh.len() {
                problems.push(format!("{}: {} stored statements, {} recomputed", p.id, have.len(), fresh.len()));
            }
            for (k, (h, f)) in have.iter().zip(&fresh).enumerate() {
                if h.statement_index != k || h.statement != *f {
                    problems.push(format!(
                        "{} statement {}: stored {:?}, recomputed {:?}",
                        p.id, h.statement_index, h.statement.label, f.label
                    ));
                }
            }
            Some(problems)
        })
        .collect();
    for problems in results {
        c.checked += 1;
        problems.into_iter().for_each(|m| c.fail(m));
    }
    c
}
