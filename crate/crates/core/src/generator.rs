//! Seeded puzzle construction.
//!
//! A target arrangement is drawn uniformly, every clue it satisfies is
//! listed and shuffled, clues are added greedily until the oracle count
//! reaches one, and the set is then minimized by trying to drop each clue
//! in a seeded random order. Candidates the propagation solver cannot
//! finish are discarded and the next attempt starts from a fresh stream.

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{
    all_placements, resolve_all, ClueRef, End, EntityRef, Placement, Puzzle, Universe, MAX_ORACLE_N,
};
use crate::puzzle::{Arrangement, Clue};
use crate::rng::{derive_seed, rng};
use crate::solver::solve_with_trace;

pub const DEFAULT_NAMES: &[&str] = &[
    "Aaron", "Andrew", "Ava", "Bella", "Blake", "Caleb", "Chloe", "Daniel", "Ella", "Ethan", "Fiona", "Gavin",
    "Hannah", "Isaac", "Jade", "Liam", "Maya", "Noah", "Olivia", "Ruby",
];

pub const DEFAULT_COLORS: &[&str] = &[
    "red", "pink", "mint", "chocolate", "lilac", "blue", "green", "yellow", "orange", "purple", "gray", "teal",
    "navy", "maroon", "beige", "coral", "olive", "white", "black", "silver",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub name_pool: Vec<String>,
    pub color_pool: Vec<String>,
    pub seed: u64,
    pub max_attempts: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 3,
            name_pool: DEFAULT_NAMES.iter().map(|s| s.to_string()).collect(),
            color_pool: DEFAULT_COLORS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            max_attempts: 100,
        }
    }
}

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        GeneratorConfig { n, seed, ..Default::default() }
    }

    /// Pools must be distinct, large enough, and spelled so the statement
    /// parser can read them back: names capitalized, colors lower-case.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 2 {
            return Err(Error::InvalidConfig(format!("n must be at least 2, got {n}")));
        }
        if n > MAX_ORACLE_N {
            return Err(Error::TooLarge { n, max: MAX_ORACLE_N });
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be positive".into()));
        }
        check_pool("name", &self.name_pool, n, |s| {
            let mut c = s.chars();
            c.next().is_some_and(|f| f.is_ascii_uppercase())
                && c.all(|ch| ch.is_ascii_alphabetic() || ch == '\'' || ch == '-')
        })?;
        check_pool("color", &self.color_pool, n, |s| {
            s != "it"
                && s.starts_with(|f: char| f.is_ascii_lowercase())
                && s.chars().all(|ch| ch.is_ascii_lowercase() || ch == '-')
        })
    }
}

fn check_pool(what: &str, pool: &[String], n: usize, well_formed: impl Fn(&str) -> bool) -> Result<()> {
    if pool.len() < n {
        return Err(Error::InvalidConfig(format!("{what} pool has {} entries, need {n}", pool.len())));
    }
    for (i, s) in pool.iter().enumerate() {
        if !well_formed(s) {
            return Err(Error::InvalidConfig(format!("{what} {s:?} is not a usable word")));
        }
        if pool[..i].contains(s) {
            return Err(Error::InvalidConfig(format!("duplicate {what} {s:?}")));
        }
    }
    Ok(())
}

/// Every clue of the fixed vocabulary that `arr` satisfies. Order: entity
/// (people in universe order, then colors), kind AtEnd, NotAtEnd, then the
/// relative kinds over ordered entity pairs, with Left before Right.
pub fn all_true_clues(arr: &Arrangement, u: &Universe) -> Result<Vec<Clue>> {
    let p = u.placement(arr)?;
    Ok(true_clue_refs(&p, u.n()).into_iter().map(|c| c.to_clue(u)).collect())
}

fn entities(n: usize) -> Vec<EntityRef> {
    (0..n).map(EntityRef::Person).chain((0..n).map(EntityRef::Color)).collect()
}

fn true_clue_refs(p: &Placement, n: usize) -> Vec<ClueRef> {
    let (pp, cp) = (p.person_pos(), p.color_pos());
    let ents = entities(n);
    let mut all = Vec::new();
    for &e in &ents {
        for end in [End::Left, End::Right] {
            all.push(ClueRef::AtEnd(e, end));
        }
        for end in [End::Left, End::Right] {
            all.push(ClueRef::NotAtEnd(e, end));
        }
    }
    for &a in &ents {
        for &b in &ents {
            if a != b {
                all.push(ClueRef::LeftOf(a, b));
                all.push(ClueRef::RightOf(a, b));
            }
        }
    }
    all.retain(|c| c.satisfied(n, &pp, &cp));
    all
}

/// Drops clues until none can go without losing uniqueness, trying them
/// in input order. Survivors keep their relative order.
pub fn minimize_clues(clues: &[Clue], u: &Universe) -> Result<Vec<Clue>> {
    let order: Vec<usize> = (0..clues.len()).collect();
    minimize_clues_in_order(clues, u, &order)
}

/// [`minimize_clues`] with an explicit removal-attempt order (a
/// permutation of clue indices).
pub fn minimize_clues_in_order(clues: &[Clue], u: &Universe, order: &[usize]) -> Result<Vec<Clue>> {
    u.validate()?;
    let refs = resolve_all(clues, u)?;
    let n = u.n();
    let count = crate::puzzle::count_placements(&refs, n)?;
    if count != 1 {
        return Err(Error::NotUnique { count });
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..clues.len()).collect::<Vec<_>>() {
        return Err(Error::InvalidConfig("removal order is not a permutation of the clues".into()));
    }
    let mut keep = vec![true; clues.len()];
    for &i in order {
        keep[i] = false;
        let rest: Vec<ClueRef> = refs.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| *c).collect();
        if crate::puzzle::count_placements(&rest, n)? != 1 {
            keep[i] = true;
        }
    }
    Ok(clues.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| c.clone()).collect())
}

/// Identifier used for generated puzzles.
pub fn puzzle_id(n: usize, seed: u64) -> String {
    format!("n{n}-{seed:016x}")
}

/// One uniqueness-guaranteed, non-redundant, solver-complete puzzle.
pub fn generate_puzzle(cfg: &GeneratorConfig) -> Result<Puzzle> {
    cfg.validate()?;
    let n = cfg.n;
    let space = all_placements(n);
    for attempt in 0..cfg.max_attempts {
        let mut r = rng(derive_seed(cfg.seed, attempt as u64));
        let names: Vec<String> = cfg.name_pool.choose_multiple(&mut r, n).cloned().collect();
        let colors: Vec<String> = cfg.color_pool.choose_multiple(&mut r, n).cloned().collect();
        let u = Universe::new(names.clone(), colors.clone())?;
        let target = space.choose(&mut r).expect("non-empty").clone();

        let mut pool = true_clue_refs(&target, n);
        pool.shuffle(&mut r);
        let mut alive: Vec<&Placement> = space.iter().collect();
        let mut chosen = Vec::new();
        for c in pool {
            if alive.len() == 1 {
                break;
            }
            let before = alive.len();
            alive.retain(|p| c.satisfied(n, &p.person_pos(), &p.color_pos()));
            if alive.len() < before {
                chosen.push(c.to_clue(&u));
            }
        }
        debug_assert_eq!(alive.len(), 1);

        let mut order: Vec<usize> = (0..chosen.len()).collect();
        order.shuffle(&mut r);
        let clues = minimize_clues_in_order(&chosen, &u, &order)?;
        let puzzle = Puzzle { id: puzzle_id(n, cfg.seed), names, colors, clues, solution: u.arrangement(&target) };
        match solve_with_trace(&puzzle) {
            Ok(_) => {
                puzzle.verify()?;
                return Ok(puzzle);
            }
            Err(Error::Stalled { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed { attempts: cfg.max_attempts as usize })
}
