//! Puzzle vocabulary: people, shirt colors, seats, clues and atomic claims,
//! plus the brute-force solution counter that every other component is
//! checked against.
//!
//! Seats are indexed `0..n` from the far left. People and colors are
//! identified by name in every serialized form; the index-based
//! [`Placement`] is the working representation inside the oracle, the
//! solver and the canonicalizer.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest seat count the exhaustive oracle accepts: 6!·6! = 518,400
/// arrangements.
pub const MAX_ORACLE_N: usize = 6;

/// Seat index, 0 = far left.
pub type Pos = usize;

/// The names, colors and seat count a puzzle ranges over.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Universe {
    pub names: Vec<String>,
    pub colors: Vec<String>,
}

impl Universe {
    pub fn new(names: Vec<String>, colors: Vec<String>) -> Result<Self> {
        let u = Universe { names, colors };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n < 2 {
            return Err(Error::InvalidUniverse(format!("need at least 2 people, got {n}")));
        }
        if self.colors.len() != n {
            return Err(Error::InvalidUniverse(format!(
                "{} people but {} colors",
                n,
                self.colors.len()
            )));
        }
        if let Some(d) = first_duplicate(&self.names) {
            return Err(Error::InvalidUniverse(format!("duplicate name {d:?}")));
        }
        if let Some(d) = first_duplicate(&self.colors) {
            return Err(Error::InvalidUniverse(format!("duplicate color {d:?}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn person_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn color_index(&self, color: &str) -> Result<usize> {
        self.colors
            .iter()
            .position(|x| x == color)
            .ok_or_else(|| Error::UnknownColor(color.to_string()))
    }

    pub fn check_pos(&self, pos: Pos) -> Result<()> {
        if pos < self.n() {
            Ok(())
        } else {
            Err(Error::UnknownPosition(pos))
        }
    }

    /// Seat label used in rendered text: "left"/"right" for two seats,
    /// "1".."n" otherwise (1 = far left).
    pub fn position_name(&self, pos: Pos) -> String {
        position_name(self.n(), pos)
    }

    /// Inverse of [`Universe::position_name`].
    pub fn parse_position(&self, text: &str) -> Option<Pos> {
        parse_position(self.n(), text)
    }

    pub fn end_pos(&self, end: End) -> Pos {
        match end {
            End::Left => 0,
            End::Right => self.n() - 1,
        }
    }

    /// Placement -> named arrangement.
    pub fn arrangement(&self, placement: &Placement) -> Arrangement {
        Arrangement {
            person_at: placement.person_at.iter().map(|&i| self.names[i].clone()).collect(),
            color_at: placement.color_at.iter().map(|&c| self.colors[c].clone()).collect(),
        }
    }

    /// Named arrangement -> placement, checking both bijections.
    pub fn placement(&self, arr: &Arrangement) -> Result<Placement> {
        let n = self.n();
        if arr.person_at.len() != n || arr.color_at.len() != n {
            return Err(Error::InvalidArrangement(format!(
                "expected {n} seats, got {} people and {} colors",
                arr.person_at.len(),
                arr.color_at.len()
            )));
        }
        let person_at = arr
            .person_at
            .iter()
            .map(|p| self.person_index(p))
            .collect::<Result<Vec<_>>>()?;
        let color_at = arr
            .color_at
            .iter()
            .map(|c| self.color_index(c))
            .collect::<Result<Vec<_>>>()?;
        let placement = Placement { person_at, color_at };
        if !placement.is_bijection() {
            return Err(Error::InvalidArrangement("seat mapping is not a bijection".into()));
        }
        Ok(placement)
    }
}

pub fn position_name(n: usize, pos: Pos) -> String {
    if n == 2 {
        if pos == 0 { "left" } else { "right" }.to_string()
    } else {
        (pos + 1).to_string()
    }
}

pub fn parse_position(n: usize, text: &str) -> Option<Pos> {
    if n == 2 {
        match text {
            "left" => Some(0),
            "right" => Some(1),
            _ => None,
        }
    } else {
        let k: usize = text.parse().ok()?;
        (1..=n).contains(&k).then(|| k - 1)
    }
}

fn first_duplicate(items: &[String]) -> Option<&String> {
    items.iter().enumerate().find_map(|(i, x)| items[..i].contains(x).then_some(x))
}

/// Full seat assignment by name. Index = seat.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arrangement {
    pub person_at: Vec<String>,
    pub color_at: Vec<String>,
}

/// Index form of an [`Arrangement`]: `person_at[pos]` is a person index,
/// `color_at[pos]` a color index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    pub person_at: Vec<usize>,
    pub color_at: Vec<usize>,
}

impl Placement {
    pub fn is_bijection(&self) -> bool {
        is_permutation(&self.person_at) && is_permutation(&self.color_at)
    }

    /// Inverse lookups: seat of each person / color.
    pub fn person_pos(&self) -> Vec<Pos> {
        invert(&self.person_at)
    }

    pub fn color_pos(&self) -> Vec<Pos> {
        invert(&self.color_at)
    }
}

fn is_permutation(v: &[usize]) -> bool {
    let mut seen = vec![false; v.len()];
    v.iter().all(|&x| x < v.len() && !std::mem::replace(&mut seen[x], true))
}

fn invert(v: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; v.len()];
    for (pos, &x) in v.iter().enumerate() {
        inv[x] = pos;
    }
    inv
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum End {
    Left,
    Right,
}

/// Something a clue can talk about: a person by name, or whoever wears a
/// given color.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Entity {
    Person(String),
    ColorWearer(String),
}

impl Entity {
    pub fn person(name: &str) -> Self {
        Entity::Person(name.to_string())
    }

    pub fn color(color: &str) -> Self {
        Entity::ColorWearer(color.to_string())
    }

    pub fn resolve(&self, u: &Universe) -> Result<EntityRef> {
        match self {
            Entity::Person(name) => u.person_index(name).map(EntityRef::Person),
            Entity::ColorWearer(color) => u.color_index(color).map(EntityRef::Color),
        }
    }
}

/// Index form of [`Entity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    Person(usize),
    Color(usize),
}

impl EntityRef {
    /// Seat of this entity given inverse seat lookups.
    pub fn pos_in(self, person_pos: &[Pos], color_pos: &[Pos]) -> Pos {
        match self {
            EntityRef::Person(i) => person_pos[i],
            EntityRef::Color(c) => color_pos[c],
        }
    }

    pub fn to_entity(self, u: &Universe) -> Entity {
        match self {
            EntityRef::Person(i) => Entity::Person(u.names[i].clone()),
            EntityRef::Color(c) => Entity::ColorWearer(u.colors[c].clone()),
        }
    }
}

/// The closed clue vocabulary. New clue kinds go here and in
/// [`ClueRef::satisfied`], the solver's clue rules and the text templates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Clue {
    AtEnd(Entity, End),
    NotAtEnd(Entity, End),
    /// First entity sits strictly right of the second, any distance.
    SomewhereRightOf(Entity, Entity),
    SomewhereLeftOf(Entity, Entity),
}

impl Clue {
    pub fn resolve(&self, u: &Universe) -> Result<ClueRef> {
        Ok(match self {
            Clue::AtEnd(e, end) => ClueRef::AtEnd(e.resolve(u)?, *end),
            Clue::NotAtEnd(e, end) => ClueRef::NotAtEnd(e.resolve(u)?, *end),
            Clue::SomewhereRightOf(a, b) => ClueRef::RightOf(a.resolve(u)?, b.resolve(u)?),
            Clue::SomewhereLeftOf(a, b) => ClueRef::LeftOf(a.resolve(u)?, b.resolve(u)?),
        })
    }
}

/// Index form of [`Clue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClueRef {
    AtEnd(EntityRef, End),
    NotAtEnd(EntityRef, End),
    RightOf(EntityRef, EntityRef),
    LeftOf(EntityRef, EntityRef),
}

impl ClueRef {
    pub fn satisfied(&self, n: usize, person_pos: &[Pos], color_pos: &[Pos]) -> bool {
        let at = |e: EntityRef| e.pos_in(person_pos, color_pos);
        let end_pos = |end: End| if end == End::Left { 0 } else { n - 1 };
        match *self {
            ClueRef::AtEnd(e, end) => at(e) == end_pos(end),
            ClueRef::NotAtEnd(e, end) => at(e) != end_pos(end),
            ClueRef::RightOf(a, b) => at(a) > at(b),
            ClueRef::LeftOf(a, b) => at(a) < at(b),
        }
    }

    pub fn to_clue(self, u: &Universe) -> Clue {
        match self {
            ClueRef::AtEnd(e, end) => Clue::AtEnd(e.to_entity(u), end),
            ClueRef::NotAtEnd(e, end) => Clue::NotAtEnd(e.to_entity(u), end),
            ClueRef::RightOf(a, b) => Clue::SomewhereRightOf(a.to_entity(u), b.to_entity(u)),
            ClueRef::LeftOf(a, b) => Clue::SomewhereLeftOf(a.to_entity(u), b.to_entity(u)),
        }
    }

    /// True if the clue mentions only people (no color wearer), only colors,
    /// or both.
    fn scope(&self) -> Scope {
        let of = |e: EntityRef| match e {
            EntityRef::Person(_) => Scope::People,
            EntityRef::Color(_) => Scope::Colors,
        };
        match *self {
            ClueRef::AtEnd(e, _) | ClueRef::NotAtEnd(e, _) => of(e),
            ClueRef::RightOf(a, b) | ClueRef::LeftOf(a, b) => {
                if of(a) == of(b) {
                    of(a)
                } else {
                    Scope::Mixed
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    People,
    Colors,
    Mixed,
}

/// An atomic, checkable assertion about the arrangement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Claim {
    PersonAt { name: String, pos: Pos },
    PersonNotAt { name: String, pos: Pos },
    ColorAt { color: String, pos: Pos },
    ColorNotAt { color: String, pos: Pos },
    PersonWears { name: String, color: String },
    PersonWearsAt { name: String, color: String, pos: Pos },
    Done,
    FinalAnswer { arrangement: Arrangement },
}

impl Claim {
    /// Checks that every name, color and seat the claim mentions exists.
    pub fn check_universe(&self, u: &Universe) -> Result<()> {
        match self {
            Claim::PersonAt { name, pos } | Claim::PersonNotAt { name, pos } => {
                u.person_index(name)?;
                u.check_pos(*pos)
            }
            Claim::ColorAt { color, pos } | Claim::ColorNotAt { color, pos } => {
                u.color_index(color)?;
                u.check_pos(*pos)
            }
            Claim::PersonWears { name, color } => {
                u.person_index(name)?;
                u.color_index(color).map(|_| ())
            }
            Claim::PersonWearsAt { name, color, pos } => {
                u.person_index(name)?;
                u.color_index(color)?;
                u.check_pos(*pos)
            }
            Claim::Done => Ok(()),
            Claim::FinalAnswer { arrangement } => {
                let n = u.n();
                if arrangement.person_at.len() != n || arrangement.color_at.len() != n {
                    return Err(Error::InvalidArrangement(format!("final answer must cover {n} seats")));
                }
                for p in &arrangement.person_at {
                    u.person_index(p)?;
                }
                for c in &arrangement.color_at {
                    u.color_index(c)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Claim::PersonAt { name, pos } => write!(f, "{name}@{pos}"),
            Claim::PersonNotAt { name, pos } => write!(f, "{name}!@{pos}"),
            Claim::ColorAt { color, pos } => write!(f, "<{color}>@{pos}"),
            Claim::ColorNotAt { color, pos } => write!(f, "<{color}>!@{pos}"),
            Claim::PersonWears { name, color } => write!(f, "{name}:<{color}>"),
            Claim::PersonWearsAt { name, color, pos } => write!(f, "{name}:<{color}>@{pos}"),
            Claim::Done => write!(f, "done"),
            Claim::FinalAnswer { arrangement } => write!(f, "final{:?}", arrangement.person_at),
        }
    }
}

/// A complete puzzle with its unique ground truth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Puzzle {
    pub id: String,
    pub names: Vec<String>,
    pub colors: Vec<String>,
    pub clues: Vec<Clue>,
    pub solution: Arrangement,
}

impl Puzzle {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn universe(&self) -> Universe {
        Universe { names: self.names.clone(), colors: self.colors.clone() }
    }

    /// Checks every puzzle invariant, including uniqueness and clue
    /// minimality under the brute-force oracle.
    pub fn verify(&self) -> Result<()> {
        let u = self.universe();
        u.validate()?;
        let placement = u.placement(&self.solution)?;
        let clues = resolve_all(&self.clues, &u)?;
        let (pp, cp) = (placement.person_pos(), placement.color_pos());
        if let Some(bad) = clues.iter().position(|c| !c.satisfied(u.n(), &pp, &cp)) {
            return Err(Error::PuzzleInvariant(format!("solution violates clue #{bad}")));
        }
        let witness = unique_solution(&clues, u.n())?;
        match witness {
            Some(w) if w == placement => {}
            Some(_) => return Err(Error::PuzzleInvariant("unique solution differs from recorded one".into())),
            None => return Err(Error::PuzzleInvariant("clues do not determine a unique solution".into())),
        }
        for skip in 0..clues.len() {
            let rest: Vec<ClueRef> =
                clues.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, c)| *c).collect();
            if count_placements(&rest, u.n())? < 2 {
                return Err(Error::PuzzleInvariant(format!("clue #{skip} is redundant")));
            }
        }
        Ok(())
    }
}

pub fn resolve_all(clues: &[Clue], u: &Universe) -> Result<Vec<ClueRef>> {
    clues.iter().map(|c| c.resolve(u)).collect()
}

/// Whether `clue` reads true of `arr`.
pub fn clue_satisfied(clue: &Clue, arr: &Arrangement, u: &Universe) -> Result<bool> {
    let c = clue.resolve(u)?;
    let p = u.placement(arr)?;
    Ok(c.satisfied(u.n(), &p.person_pos(), &p.color_pos()))
}

/// Whether `claim` is true of `arr`. `Done` holds vacuously; a final answer
/// holds iff it equals `arr` exactly.
pub fn claim_holds(claim: &Claim, arr: &Arrangement, u: &Universe) -> Result<bool> {
    claim.check_universe(u)?;
    let p = u.placement(arr)?;
    Ok(placement_satisfies(claim, &p, u))
}

/// Same as [`claim_holds`] on a pre-resolved placement; the claim must
/// already be known to lie inside the universe.
pub(crate) fn placement_satisfies(claim: &Claim, p: &Placement, u: &Universe) -> bool {
    let pi = |name: &str| u.person_index(name).expect("checked");
    let ci = |color: &str| u.color_index(color).expect("checked");
    match claim {
        Claim::PersonAt { name, pos } => p.person_at[*pos] == pi(name),
        Claim::PersonNotAt { name, pos } => p.person_at[*pos] != pi(name),
        Claim::ColorAt { color, pos } => p.color_at[*pos] == ci(color),
        Claim::ColorNotAt { color, pos } => p.color_at[*pos] != ci(color),
        Claim::PersonWears { name, color } => p.color_at[p.person_pos()[pi(name)]] == ci(color),
        Claim::PersonWearsAt { name, color, pos } => p.person_at[*pos] == pi(name) && p.color_at[*pos] == ci(color),
        Claim::Done => true,
        Claim::FinalAnswer { arrangement } => u.arrangement(p) == *arrangement,
    }
}

fn check_feasible(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidUniverse(format!("need at least 2 people, got {n}")));
    }
    if n > MAX_ORACLE_N {
        return Err(Error::TooLarge { n, max: MAX_ORACLE_N });
    }
    Ok(())
}

/// Every placement over `n` seats satisfying all `clues`, in lexicographic
/// (person order, color order) sequence.
pub fn enumerate_placements(clues: &[ClueRef], n: usize) -> Result<Vec<Placement>> {
    check_feasible(n)?;
    let mut out = Vec::new();
    for_each_solution(clues, n, |p| {
        out.push(p.clone());
        true
    });
    Ok(out)
}

/// Exact number of satisfying placements.
pub fn count_placements(clues: &[ClueRef], n: usize) -> Result<usize> {
    check_feasible(n)?;
    let mut count = 0;
    for_each_solution(clues, n, |_| {
        count += 1;
        true
    });
    Ok(count)
}

/// `Some(witness)` when exactly one placement satisfies the clues.
pub fn unique_solution(clues: &[ClueRef], n: usize) -> Result<Option<Placement>> {
    check_feasible(n)?;
    let mut found = Vec::with_capacity(2);
    for_each_solution(clues, n, |p| {
        found.push(p.clone());
        found.len() < 2
    });
    Ok(if found.len() == 1 { found.pop() } else { None })
}

/// Count of arrangements over the puzzle's names and colors satisfying
/// every clue.
pub fn count_solutions(clues: &[Clue], u: &Universe) -> Result<usize> {
    u.validate()?;
    check_feasible(u.n())?;
    count_placements(&resolve_all(clues, u)?, u.n())
}

/// Drives `visit` over every satisfying placement until it returns false.
/// Person-only and color-only clues prune their own permutation lists
/// before the mixed clues are checked on the product.
fn for_each_solution(clues: &[ClueRef], n: usize, mut visit: impl FnMut(&Placement) -> bool) {
    let people: Vec<&ClueRef> = clues.iter().filter(|c| c.scope() == Scope::People).collect();
    let colors: Vec<&ClueRef> = clues.iter().filter(|c| c.scope() == Scope::Colors).collect();
    let mixed: Vec<&ClueRef> = clues.iter().filter(|c| c.scope() == Scope::Mixed).collect();
    let dummy = vec![0; n];

    let person_perms: Vec<(Vec<usize>, Vec<Pos>)> = (0..n)
        .permutations(n)
        .map(|at| {
            let pos = invert(&at);
            (at, pos)
        })
        .filter(|(_, pos)| people.iter().all(|c| c.satisfied(n, pos, &dummy)))
        .collect();
    let color_perms: Vec<(Vec<usize>, Vec<Pos>)> = (0..n)
        .permutations(n)
        .map(|at| {
            let pos = invert(&at);
            (at, pos)
        })
        .filter(|(_, pos)| colors.iter().all(|c| c.satisfied(n, &dummy, pos)))
        .collect();

    for (p_at, p_pos) in &person_perms {
        for (c_at, c_pos) in &color_perms {
            if mixed.iter().all(|c| c.satisfied(n, p_pos, c_pos)) {
                let placement = Placement { person_at: p_at.clone(), color_at: c_at.clone() };
                if !visit(&placement) {
                    return;
                }
            }
        }
    }
}

/// Every placement over `n` seats, unconstrained.
pub fn all_placements(n: usize) -> Vec<Placement> {
    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    perms
        .iter()
        .flat_map(|p| perms.iter().map(move |c| Placement { person_at: p.clone(), color_at: c.clone() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn two(names: [&str; 2], colors: [&str; 2]) -> Universe {
        Universe::new(names.iter().map(|s| s.to_string()).collect(), colors.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    fn arr(people: [&str; 2], colors: [&str; 2]) -> Arrangement {
        Arrangement {
            person_at: people.iter().map(|s| s.to_string()).collect(),
            color_at: colors.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn far_right_clue() {
        let u = two(["Ava", "Blake"], ["red", "pink"]);
        let a = arr(["Ava", "Blake"], ["red", "pink"]);
        assert!(clue_satisfied(&Clue::AtEnd(Entity::person("Blake"), End::Right), &a, &u).unwrap());
    }

    #[test]
    fn not_far_left_contradiction() {
        let u = two(["Ava", "Blake"], ["red", "pink"]);
        let a = arr(["Ava", "Blake"], ["pink", "red"]);
        assert!(!clue_satisfied(&Clue::NotAtEnd(Entity::color("pink"), End::Left), &a, &u).unwrap());
    }

    #[test]
    fn somewhere_right_of_color_wearer() {
        let u = two(["Aaron", "Blake"], ["mint", "lilac"]);
        let a = arr(["Aaron", "Blake"], ["mint", "lilac"]);
        let clue = Clue::SomewhereRightOf(Entity::person("Blake"), Entity::color("mint"));
        assert!(clue_satisfied(&clue, &a, &u).unwrap());
    }

    #[test]
    fn unknown_names_are_domain_errors() {
        let u = two(["Ava", "Blake"], ["red", "pink"]);
        let a = arr(["Ava", "Blake"], ["red", "pink"]);
        let clue = Clue::AtEnd(Entity::person("Zed"), End::Left);
        assert!(matches!(clue_satisfied(&clue, &a, &u), Err(Error::UnknownName(_))));
        let claim = Claim::ColorAt { color: "teal".into(), pos: 0 };
        assert!(matches!(claim_holds(&claim, &a, &u), Err(Error::UnknownColor(_))));
    }

    #[test]
    fn claims_against_first_example_solution() {
        let p = fixtures::ava_blake();
        let u = p.universe();
        let holds = |c: Claim| claim_holds(&c, &p.solution, &u).unwrap();
        assert!(holds(Claim::PersonWearsAt { name: "Ava".into(), color: "red".into(), pos: 0 }));
        assert!(!holds(Claim::PersonAt { name: "Ava".into(), pos: 1 }));
        assert!(holds(Claim::ColorNotAt { color: "pink".into(), pos: 0 }));
        assert!(holds(Claim::PersonWears { name: "Blake".into(), color: "pink".into() }));
        assert!(holds(Claim::Done));
        assert!(holds(Claim::FinalAnswer { arrangement: p.solution.clone() }));
        let swapped = arr(["Blake", "Ava"], ["red", "pink"]);
        assert!(!holds(Claim::FinalAnswer { arrangement: swapped }));
    }

    #[test]
    fn counts() {
        let p = fixtures::ava_blake();
        let u = p.universe();
        assert_eq!(count_solutions(&[], &u).unwrap(), 4);
        assert_eq!(count_solutions(&p.clues, &u).unwrap(), 1);
        let single = [Clue::AtEnd(Entity::person("Blake"), End::Right)];
        assert_eq!(count_solutions(&single, &u).unwrap(), 2);
        p.verify().unwrap();
        fixtures::andrew_bella().verify().unwrap();
        fixtures::aaron_blake().verify().unwrap();
    }

    #[test]
    fn oracle_refuses_large_n() {
        let names: Vec<String> = (0..7).map(|i| format!("N{i}")).collect();
        let colors: Vec<String> = (0..7).map(|i| format!("c{i}")).collect();
        let u = Universe::new(names, colors).unwrap();
        assert!(matches!(count_solutions(&[], &u), Err(Error::TooLarge { n: 7, max: 6 })));
    }

    #[test]
    fn count_matches_naive_enumeration() {
        // n = 3 with a mix of person, color and cross clues
        let u = Universe::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec!["x".into(), "y".into(), "z".into()],
        )
        .unwrap();
        let clues = vec![
            Clue::SomewhereLeftOf(Entity::person("A"), Entity::color("y")),
            Clue::NotAtEnd(Entity::person("C"), End::Right),
            Clue::SomewhereRightOf(Entity::color("z"), Entity::color("x")),
        ];
        let resolved = resolve_all(&clues, &u).unwrap();
        let naive = all_placements(3)
            .into_iter()
            .filter(|p| resolved.iter().all(|c| c.satisfied(3, &p.person_pos(), &p.color_pos())))
            .count();
        assert_eq!(count_solutions(&clues, &u).unwrap(), naive);
    }

    #[test]
    fn left_of_mirrors_right_of_exhaustively() {
        for n in 2..=4 {
            let entities: Vec<EntityRef> =
                (0..n).map(EntityRef::Person).chain((0..n).map(EntityRef::Color)).collect();
            for p in all_placements(n) {
                let (pp, cp) = (p.person_pos(), p.color_pos());
                for &a in &entities {
                    for &b in &entities {
                        assert_eq!(
                            ClueRef::LeftOf(a, b).satisfied(n, &pp, &cp),
                            ClueRef::RightOf(b, a).satisfied(n, &pp, &cp)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn position_names() {
        assert_eq!(position_name(2, 0), "left");
        assert_eq!(position_name(2, 1), "right");
        assert_eq!(position_name(4, 0), "1");
        assert_eq!(parse_position(4, "4"), Some(3));
        assert_eq!(parse_position(4, "5"), None);
        assert_eq!(parse_position(2, "1"), None);
    }

    #[test]
    fn universe_validation() {
        assert!(Universe::new(vec!["A".into()], vec!["x".into()]).is_err());
        assert!(Universe::new(vec!["A".into(), "A".into()], vec!["x".into(), "y".into()]).is_err());
        assert!(Universe::new(vec!["A".into(), "B".into()], vec!["x".into()]).is_err());
    }
}
