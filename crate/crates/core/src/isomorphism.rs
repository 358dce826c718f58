//! Puzzle isomorphism: equality up to clue order and a renaming of people
//! and colors (seat positions are *not* mirrored).
//!
//! The canonical key is found by brute force: every one of the (n!)²
//! renamings to `P1..Pn` / `C1..Cn` is applied, the clue encodings are
//! sorted, and the lexicographically smallest result wins.

use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{resolve_all, ClueRef, End, EntityRef, Puzzle, MAX_ORACLE_N};
use crate::rng::rng;
use crate::solver::ReasoningTrace;
use crate::text::StepDetail;
use crate::{Clue, Entity};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IsomorphismKey(pub String);

impl fmt::Display for IsomorphismKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn encode_entity(e: EntityRef, person_map: &[usize], color_map: &[usize], out: &mut String) {
    match e {
        EntityRef::Person(i) => {
            out.push('P');
            out.push_str(&(person_map[i] + 1).to_string());
        }
        EntityRef::Color(i) => {
            out.push('C');
            out.push_str(&(color_map[i] + 1).to_string());
        }
    }
}

fn encode_clue(c: &ClueRef, person_map: &[usize], color_map: &[usize]) -> String {
    let mut s = String::with_capacity(12);
    let end = |e: End| if e == End::Left { "L" } else { "R" };
    match *c {
        ClueRef::AtEnd(e, side) => {
            s.push_str("at(");
            encode_entity(e, person_map, color_map, &mut s);
            s.push(',');
            s.push_str(end(side));
        }
        ClueRef::NotAtEnd(e, side) => {
            s.push_str("not(");
            encode_entity(e, person_map, color_map, &mut s);
            s.push(',');
            s.push_str(end(side));
        }
        ClueRef::RightOf(a, b) | ClueRef::LeftOf(a, b) => {
            s.push_str(if matches!(c, ClueRef::RightOf(..)) { "right(" } else { "left(" });
            encode_entity(a, person_map, color_map, &mut s);
            s.push(',');
            encode_entity(b, person_map, color_map, &mut s);
        }
    }
    s.push(')');
    s
}

/// Lexicographically minimal clue-multiset encoding over all renamings,
/// e.g. `n2:at(P1,R);not(C1,L)`.
pub fn canonical_key(puzzle: &Puzzle) -> Result<IsomorphismKey> {
    let u = puzzle.universe();
    u.validate()?;
    let n = u.n();
    if n > MAX_ORACLE_N {
        return Err(Error::TooLarge { n, max: MAX_ORACLE_N });
    }
    let clues = resolve_all(&puzzle.clues, &u)?;
    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let mut best: Option<Vec<String>> = None;
    for pm in &perms {
        for cm in &perms {
            let mut enc: Vec<String> = clues.iter().map(|c| encode_clue(c, pm, cm)).collect();
            enc.sort_unstable();
            if best.as_ref().is_none_or(|b| enc < *b) {
                best = Some(enc);
            }
        }
    }
    Ok(IsomorphismKey(format!("n{n}:{}", best.unwrap_or_default().join(";"))))
}

/// Applies a renaming to a puzzle: names and colors are replaced
/// everywhere (vocabulary, clues, solution).
pub fn rename_puzzle(p: &Puzzle, sub: &Substitution) -> Puzzle {
    let name = |s: &String| sub.names.get(s).cloned().unwrap_or_else(|| s.clone());
    let color = |s: &String| sub.colors.get(s).cloned().unwrap_or_else(|| s.clone());
    let ent = |e: &Entity| match e {
        Entity::Person(s) => Entity::Person(name(s)),
        Entity::ColorWearer(c) => Entity::ColorWearer(color(c)),
    };
    let clues = p
        .clues
        .iter()
        .map(|c| match c {
            Clue::AtEnd(e, end) => Clue::AtEnd(ent(e), *end),
            Clue::NotAtEnd(e, end) => Clue::NotAtEnd(ent(e), *end),
            Clue::SomewhereRightOf(a, b) => Clue::SomewhereRightOf(ent(a), ent(b)),
            Clue::SomewhereLeftOf(a, b) => Clue::SomewhereLeftOf(ent(a), ent(b)),
        })
        .collect();
    let mut solution = p.solution.clone();
    solution.person_at.iter_mut().for_each(|s| *s = name(s));
    solution.color_at.iter_mut().for_each(|s| *s = color(s));
    Puzzle {
        id: p.id.clone(),
        names: p.names.iter().map(name).collect(),
        colors: p.colors.iter().map(color).collect(),
        clues,
        solution,
    }
}

/// A seeded renaming onto names and colors drawn from the pools. The
/// vocabulary and clue order are kept, so the renamed puzzle's trace is
/// isomorphic to the original's; the id is left unchanged.
pub fn random_renaming(
    p: &Puzzle,
    name_pool: &[String],
    color_pool: &[String],
    seed: u64,
) -> Result<(Puzzle, Substitution)> {
    let n = p.n();
    if name_pool.iter().unique().count() < n || color_pool.iter().unique().count() < n {
        return Err(Error::InvalidConfig(format!("renaming pools need {n} distinct names and colors")));
    }
    let mut r = rng(seed);
    let names: Vec<&String> = name_pool.iter().unique().collect::<Vec<_>>().choose_multiple(&mut r, n).copied().collect();
    let colors: Vec<&String> =
        color_pool.iter().unique().collect::<Vec<_>>().choose_multiple(&mut r, n).copied().collect();
    let sub = Substitution {
        names: p.names.iter().cloned().zip(names.into_iter().cloned()).collect(),
        colors: p.colors.iter().cloned().zip(colors.into_iter().cloned()).collect(),
    };
    Ok((rename_puzzle(p, &sub), sub))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub id: String,
    pub key: IsomorphismKey,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// In input order.
    pub records: Vec<SplitRecord>,
    /// Puzzle counts for train, validation, test.
    pub counts: [usize; 3],
}

impl SplitAssignment {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.records.iter().find(|r| r.id == id).map(|r| r.split)
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.records.iter().filter(move |r| r.split == split).map(|r| r.id.as_str())
    }
}

/// Splits puzzles so that every isomorphism class lands in exactly one
/// split, aiming at `fractions` of the puzzle count.
pub fn split_dataset(puzzles: &[Puzzle], fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let keyed = puzzles
        .iter()
        .map(|p| Ok((p.id.clone(), canonical_key(p)?)))
        .collect::<Result<Vec<_>>>()?;
    split_by_keys(&keyed, fractions, seed)
}

/// [`split_dataset`] over precomputed keys.
///
/// Classes are shuffled with the seed, stably sorted largest first, and
/// each goes to the split furthest below its target count (ties to the
/// earlier split).
pub fn split_by_keys(items: &[(String, IsomorphismKey)], fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if fractions.iter().any(|f| !f.is_finite() || *f <= 0.0) {
        return Err(Error::InvalidSplit(format!("fractions must be positive, got {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit(format!("fractions sum to {sum}, not 1")));
    }
    let mut classes: BTreeMap<&IsomorphismKey, usize> = BTreeMap::new();
    for (_, key) in items {
        *classes.entry(key).or_default() += 1;
    }
    if classes.len() < 3 {
        return Err(Error::InvalidSplit(format!("need at least 3 isomorphism classes, got {}", classes.len())));
    }
    let mut order: Vec<(&IsomorphismKey, usize)> = classes.into_iter().collect();
    order.shuffle(&mut rng(seed));
    order.sort_by_key(|&(_, size)| std::cmp::Reverse(size));

    let total = items.len() as f64;
    let targets: Vec<f64> = fractions.iter().map(|f| f * total).collect();
    let mut counts = [0usize; 3];
    let mut assigned: BTreeMap<&IsomorphismKey, Split> = BTreeMap::new();
    for (key, size) in order {
        let mut pick = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, t) in targets.iter().enumerate() {
            let deficit = t - counts[i] as f64;
            if deficit > best {
                best = deficit;
                pick = i;
            }
        }
        counts[pick] += size;
        assigned.insert(key, Split::ALL[pick]);
    }
    let records = items
        .iter()
        .map(|(id, key)| SplitRecord { id: id.clone(), key: key.clone(), split: assigned[key] })
        .collect();
    Ok(SplitAssignment { records, counts })
}

/// A renaming of people and colors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub names: BTreeMap<String, String>,
    pub colors: BTreeMap<String, String>,
}

impl Substitution {
    fn name<'a>(&'a self, s: &'a str) -> &'a str {
        self.names.get(s).map_or(s, String::as_str)
    }

    fn color<'a>(&'a self, s: &'a str) -> &'a str {
        self.colors.get(s).map_or(s, String::as_str)
    }

    fn entity(&self, e: &Entity) -> Entity {
        match e {
            Entity::Person(s) => Entity::Person(self.name(s).to_string()),
            Entity::ColorWearer(c) => Entity::ColorWearer(self.color(c).to_string()),
        }
    }

    pub fn apply_to_clue(&self, c: &Clue) -> Clue {
        match c {
            Clue::AtEnd(e, end) => Clue::AtEnd(self.entity(e), *end),
            Clue::NotAtEnd(e, end) => Clue::NotAtEnd(self.entity(e), *end),
            Clue::SomewhereRightOf(a, b) => Clue::SomewhereRightOf(self.entity(a), self.entity(b)),
            Clue::SomewhereLeftOf(a, b) => Clue::SomewhereLeftOf(self.entity(a), self.entity(b)),
        }
    }

    /// `detail` with every name and color replaced; option lists come back
    /// sorted so that two renamed details compare as sets.
    pub fn apply_to_detail(&self, d: &StepDetail) -> StepDetail {
        use StepDetail as D;
        let n = |s: &String| self.name(s).to_string();
        let c = |s: &String| self.color(s).to_string();
        match d {
            D::ClueHeader { clue } => D::ClueHeader { clue: self.apply_to_clue(clue) },
            D::PersonAtByClue { name, pos } => D::PersonAtByClue { name: n(name), pos: *pos },
            D::ColorAtByClue { color, pos } => D::ColorAtByClue { color: c(color), pos: *pos },
            D::PersonNotAtByClue { name, pos } => D::PersonNotAtByClue { name: n(name), pos: *pos },
            D::ColorNotAtByClue { color, pos } => D::ColorNotAtByClue { color: c(color), pos: *pos },
            D::RelativeMust { reason, reason_positions, target, pos } => D::RelativeMust {
                reason: self.entity(reason),
                reason_positions: reason_positions.clone(),
                target: self.entity(target),
                pos: *pos,
            },
            D::RelativeNot { reason, reason_positions, target, pos } => D::RelativeNot {
                reason: self.entity(reason),
                reason_positions: reason_positions.clone(),
                target: self.entity(target),
                pos: *pos,
            },
            D::PersonElsewhere { name, pos, at } => D::PersonElsewhere { name: n(name), pos: *pos, at: *at },
            D::ColorElsewhere { color, pos, at } => D::ColorElsewhere { color: c(color), pos: *pos, at: *at },
            D::PersonDisplaced { name, pos, occupant } => {
                D::PersonDisplaced { name: n(name), pos: *pos, occupant: n(occupant) }
            }
            D::ColorDisplaced { color, pos, occupant } => {
                D::ColorDisplaced { color: c(color), pos: *pos, occupant: c(occupant) }
            }
            D::OnlyPerson { name, pos } => D::OnlyPerson { name: n(name), pos: *pos },
            D::OnlyColor { color, pos } => D::OnlyColor { color: c(color), pos: *pos },
            D::PersonWearsContext { name, options, pos, color } => D::PersonWearsContext {
                name: n(name),
                options: options.iter().map(c).sorted().collect(),
                pos: *pos,
                color: c(color),
            },
            D::PersonWearsAt { name, color, pos } => D::PersonWearsAt { name: n(name), color: c(color), pos: *pos },
            D::ColorWornContext { color, options, pos, name } => D::ColorWornContext {
                color: c(color),
                options: options.iter().map(n).sorted().collect(),
                pos: *pos,
                name: n(name),
            },
            D::PositionHas { name, color, pos } => D::PositionHas { name: n(name), color: c(color), pos: *pos },
            D::PersonWears { name, color } => D::PersonWears { name: n(name), color: c(color) },
            D::Done => D::Done,
        }
    }
}

/// The renaming carrying `t1` step-for-step onto `t2`, if there is one.
///
/// Both final arrangements list every person and color by seat, so any
/// such renaming must send the occupant of each seat in `t1` to the
/// occupant of the same seat in `t2`; that candidate is then checked
/// against every step.
pub fn traces_isomorphic(t1: &ReasoningTrace, t2: &ReasoningTrace) -> Option<Substitution> {
    let (a, b) = (&t1.final_arrangement, &t2.final_arrangement);
    if t1.steps.len() != t2.steps.len() || a.person_at.len() != b.person_at.len() {
        return None;
    }
    let sub = Substitution {
        names: a.person_at.iter().cloned().zip(b.person_at.iter().cloned()).collect(),
        colors: a.color_at.iter().cloned().zip(b.color_at.iter().cloned()).collect(),
    };
    let identity = Substitution::default();
    let matches = t1
        .steps
        .iter()
        .zip(&t2.steps)
        .all(|(s1, s2)| s1.kind == s2.kind && sub.apply_to_detail(&s1.detail) == identity.apply_to_detail(&s2.detail));
    matches.then_some(sub)
}
