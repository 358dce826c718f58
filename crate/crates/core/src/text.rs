//! Sentence templates for reasoning steps, clues and puzzle statements.
//!
//! [`TEMPLATES`] is the single table both the solver (rendering) and the
//! parser (regex extraction) are built from. `docs/templates.md` publishes
//! the same table; bump [`TEMPLATE_VERSION`] whenever a skeleton changes.
//!
//! Hole syntax inside skeletons:
//!
//! | hole | fills with |
//! |---|---|
//! | `{person}`, `{person2}` | a name |
//! | `{color}`, `{color2}` | a color, lower case |
//! | `{Color}` | a color with its first letter upper-cased (sentence start) |
//! | `{pos}`, `{pos2}` | a seat label (`left`/`right` or `1`..`n`) |
//! | `{entity}` | a name or `the person wearing <color>` |
//! | `{positions}` | `position <p>` or `one of positions <p>, <q> or <r>` |
//! | `{colors}`, `{persons}` | an alphabetical `a, b or c` list |
//! | `{clue}` | a rendered clue sentence |
//! | `{answer}` | the final-answer list |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::puzzle::{position_name, Arrangement, Claim, Clue, End, Entity, Pos, Puzzle, Universe};

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    ClueApplication,
    Elimination,
    OnlyRemaining,
    Composition,
    Terminal,
}

#[derive(Clone, Copy, Debug)]
pub struct Template {
    pub id: &'static str,
    pub kind: StepKind,
    pub skeleton: &'static str,
}

const fn t(id: &'static str, kind: StepKind, skeleton: &'static str) -> Template {
    Template { id, kind, skeleton }
}

use StepKind::*;

pub const TEMPLATES: &[Template] = &[
    t("clue_header", ClueApplication, "Applying clue: {clue}"),
    t("person_at_by_clue", ClueApplication, "{person} must be at position {pos}."),
    t("color_at_by_clue", ClueApplication, "The person wearing {color} must be at position {pos}."),
    t("person_not_at_by_clue", ClueApplication, "{person} cannot be at position {pos}."),
    t("color_not_at_by_clue", ClueApplication, "The person wearing {color} cannot be at position {pos}."),
    t("relative_person_must", ClueApplication, "Because {entity} is at {positions}, {person} must be in position {pos}."),
    t(
        "relative_color_must",
        ClueApplication,
        "Because {entity} is at {positions}, the person wearing {color} must be in position {pos}.",
    ),
    t("relative_person_not", ClueApplication, "Because {entity} is at {positions}, {person} cannot be in position {pos}."),
    t(
        "relative_color_not",
        ClueApplication,
        "Because {entity} is at {positions}, the person wearing {color} cannot be in position {pos}.",
    ),
    t("person_elsewhere", Elimination, "{person} cannot be at position {pos} because they are at position {pos2}."),
    t(
        "color_elsewhere",
        Elimination,
        "{Color} cannot be worn by someone at position {pos} because it is worn by someone at position {pos2}.",
    ),
    t("person_displaced", Elimination, "{person} cannot be at position {pos} because {person2} is at position {pos2}."),
    t(
        "color_displaced",
        Elimination,
        "{Color} cannot be worn by someone at position {pos} because {color2} is worn by someone at position {pos2}.",
    ),
    t("only_person", OnlyRemaining, "Position {pos} must have {person} because they're the only person left."),
    t("only_color", OnlyRemaining, "Position {pos} must have someone wearing {color} because it's the only color left."),
    t(
        "person_wears_context",
        Composition,
        "{person} is wearing one of {colors}, and they are at position {pos} which contains someone wearing {color}.",
    ),
    t("person_wears_at", Composition, "Therefore, {person} must be wearing {color} at position {pos}."),
    t(
        "color_worn_context",
        Composition,
        "{Color} is worn by one of {persons}, and it is at position {pos} which contains {person}.",
    ),
    t("position_has", Composition, "Therefore, position {pos} must have {person} wearing {color}."),
    t("person_wears", Composition, "{person} must be wearing {color}."),
    t("done", Terminal, "All positions have been determined."),
    t("final_answer", Terminal, "Final answer: {answer}"),
];

pub fn template(id: &str) -> &'static Template {
    TEMPLATES.iter().find(|t| t.id == id).unwrap_or_else(|| panic!("no template {id:?}"))
}

/// Everything needed to render one reasoning step. Names and colors are
/// stored by value so a serialized trace is self-describing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum StepDetail {
    ClueHeader { clue: Clue },
    PersonAtByClue { name: String, pos: Pos },
    ColorAtByClue { color: String, pos: Pos },
    PersonNotAtByClue { name: String, pos: Pos },
    ColorNotAtByClue { color: String, pos: Pos },
    /// Relative clue pruning `target` given where `reason` may still sit.
    RelativeMust { reason: Entity, reason_positions: Vec<Pos>, target: Entity, pos: Pos },
    RelativeNot { reason: Entity, reason_positions: Vec<Pos>, target: Entity, pos: Pos },
    PersonElsewhere { name: String, pos: Pos, at: Pos },
    ColorElsewhere { color: String, pos: Pos, at: Pos },
    PersonDisplaced { name: String, pos: Pos, occupant: String },
    ColorDisplaced { color: String, pos: Pos, occupant: String },
    OnlyPerson { name: String, pos: Pos },
    OnlyColor { color: String, pos: Pos },
    PersonWearsContext { name: String, options: Vec<String>, pos: Pos, color: String },
    PersonWearsAt { name: String, color: String, pos: Pos },
    ColorWornContext { color: String, options: Vec<String>, pos: Pos, name: String },
    PositionHas { name: String, color: String, pos: Pos },
    PersonWears { name: String, color: String },
    Done,
}

impl StepDetail {
    pub fn template_id(&self) -> &'static str {
        use StepDetail as D;
        match self {
            D::ClueHeader { .. } => "clue_header",
            D::PersonAtByClue { .. } => "person_at_by_clue",
            D::ColorAtByClue { .. } => "color_at_by_clue",
            D::PersonNotAtByClue { .. } => "person_not_at_by_clue",
            D::ColorNotAtByClue { .. } => "color_not_at_by_clue",
            D::RelativeMust { target: Entity::Person(_), .. } => "relative_person_must",
            D::RelativeMust { .. } => "relative_color_must",
            D::RelativeNot { target: Entity::Person(_), .. } => "relative_person_not",
            D::RelativeNot { .. } => "relative_color_not",
            D::PersonElsewhere { .. } => "person_elsewhere",
            D::ColorElsewhere { .. } => "color_elsewhere",
            D::PersonDisplaced { .. } => "person_displaced",
            D::ColorDisplaced { .. } => "color_displaced",
            D::OnlyPerson { .. } => "only_person",
            D::OnlyColor { .. } => "only_color",
            D::PersonWearsContext { .. } => "person_wears_context",
            D::PersonWearsAt { .. } => "person_wears_at",
            D::ColorWornContext { .. } => "color_worn_context",
            D::PositionHas { .. } => "position_has",
            D::PersonWears { .. } => "person_wears",
            D::Done => "done",
        }
    }

    pub fn kind(&self) -> StepKind {
        template(self.template_id()).kind
    }

    /// The atomic claim this step asserts, if any. Headers and the
    /// "one of ..." context lines assert nothing checkable.
    pub fn claim(&self) -> Option<Claim> {
        use StepDetail as D;
        let at = |e: &Entity, pos: Pos| match e {
            Entity::Person(name) => Claim::PersonAt { name: name.clone(), pos },
            Entity::ColorWearer(color) => Claim::ColorAt { color: color.clone(), pos },
        };
        let not_at = |e: &Entity, pos: Pos| match e {
            Entity::Person(name) => Claim::PersonNotAt { name: name.clone(), pos },
            Entity::ColorWearer(color) => Claim::ColorNotAt { color: color.clone(), pos },
        };
        Some(match self {
            D::ClueHeader { .. } | D::PersonWearsContext { .. } | D::ColorWornContext { .. } => return None,
            D::PersonAtByClue { name, pos } | D::OnlyPerson { name, pos } => {
                Claim::PersonAt { name: name.clone(), pos: *pos }
            }
            D::ColorAtByClue { color, pos } | D::OnlyColor { color, pos } => {
                Claim::ColorAt { color: color.clone(), pos: *pos }
            }
            D::PersonNotAtByClue { name, pos }
            | D::PersonElsewhere { name, pos, .. }
            | D::PersonDisplaced { name, pos, .. } => Claim::PersonNotAt { name: name.clone(), pos: *pos },
            D::ColorNotAtByClue { color, pos }
            | D::ColorElsewhere { color, pos, .. }
            | D::ColorDisplaced { color, pos, .. } => Claim::ColorNotAt { color: color.clone(), pos: *pos },
            D::RelativeMust { target, pos, .. } => at(target, *pos),
            D::RelativeNot { target, pos, .. } => not_at(target, *pos),
            D::PersonWearsAt { name, color, pos } | D::PositionHas { name, color, pos } => {
                Claim::PersonWearsAt { name: name.clone(), color: color.clone(), pos: *pos }
            }
            D::PersonWears { name, color } => Claim::PersonWears { name: name.clone(), color: color.clone() },
            D::Done => Claim::Done,
        })
    }

    /// Hole values for this step's skeleton.
    fn holes(&self, n: usize) -> BTreeMap<&'static str, String> {
        use StepDetail as D;
        let pn = |p: &Pos| position_name(n, *p);
        let mut h = BTreeMap::new();
        match self {
            D::ClueHeader { clue } => {
                h.insert("clue", render_clue(clue));
            }
            D::PersonAtByClue { name, pos }
            | D::PersonNotAtByClue { name, pos }
            | D::OnlyPerson { name, pos } => {
                h.insert("person", name.clone());
                h.insert("pos", pn(pos));
            }
            D::ColorAtByClue { color, pos }
            | D::ColorNotAtByClue { color, pos }
            | D::OnlyColor { color, pos } => {
                h.insert("color", color.clone());
                h.insert("pos", pn(pos));
            }
            D::RelativeMust { reason, reason_positions, target, pos }
            | D::RelativeNot { reason, reason_positions, target, pos } => {
                h.insert("entity", entity_phrase(reason));
                h.insert("positions", positions_phrase(n, reason_positions));
                match target {
                    Entity::Person(name) => h.insert("person", name.clone()),
                    Entity::ColorWearer(color) => h.insert("color", color.clone()),
                };
                h.insert("pos", pn(pos));
            }
            D::PersonElsewhere { name, pos, at } => {
                h.insert("person", name.clone());
                h.insert("pos", pn(pos));
                h.insert("pos2", pn(at));
            }
            D::ColorElsewhere { color, pos, at } => {
                h.insert("Color", capitalize(color));
                h.insert("pos", pn(pos));
                h.insert("pos2", pn(at));
            }
            D::PersonDisplaced { name, pos, occupant } => {
                h.insert("person", name.clone());
                h.insert("person2", occupant.clone());
                h.insert("pos", pn(pos));
                h.insert("pos2", pn(pos));
            }
            D::ColorDisplaced { color, pos, occupant } => {
                h.insert("Color", capitalize(color));
                h.insert("color2", occupant.clone());
                h.insert("pos", pn(pos));
                h.insert("pos2", pn(pos));
            }
            D::PersonWearsContext { name, options, pos, color } => {
                h.insert("person", name.clone());
                h.insert("colors", join_or(options));
                h.insert("pos", pn(pos));
                h.insert("color", color.clone());
            }
            D::ColorWornContext { color, options, pos, name } => {
                h.insert("Color", capitalize(color));
                h.insert("persons", join_or(options));
                h.insert("pos", pn(pos));
                h.insert("person", name.clone());
            }
            D::PersonWearsAt { name, color, pos } | D::PositionHas { name, color, pos } => {
                h.insert("person", name.clone());
                h.insert("color", color.clone());
                h.insert("pos", pn(pos));
            }
            D::PersonWears { name, color } => {
                h.insert("person", name.clone());
                h.insert("color", color.clone());
            }
            D::Done => {}
        }
        h
    }
}

/// Renders one step as its template sentence.
pub fn render_step(detail: &StepDetail, n: usize) -> String {
    fill(template(detail.template_id()).skeleton, &detail.holes(n))
}

/// Substitutes `{hole}`s in a skeleton. Panics on a hole with no value;
/// templates and `holes` are maintained together.
pub fn fill(skeleton: &str, holes: &BTreeMap<&'static str, String>) -> String {
    let mut out = String::with_capacity(skeleton.len() + 32);
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("unclosed hole");
        let name = &rest[open + 1..close];
        out.push_str(holes.get(name).unwrap_or_else(|| panic!("missing hole {name}")));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `a`, `a or b`, `a, b or c`.
pub fn join_or<S: AsRef<str>>(items: &[S]) -> String {
    join_with(items, "or")
}

fn join_with<S: AsRef<str>>(items: &[S], last: &str) -> String {
    match items {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [init @ .., tail] => {
            let head: Vec<&str> = init.iter().map(|s| s.as_ref()).collect();
            format!("{} {last} {}", head.join(", "), tail.as_ref())
        }
    }
}

fn entity_phrase(e: &Entity) -> String {
    match e {
        Entity::Person(name) => name.clone(),
        Entity::ColorWearer(color) => format!("the person wearing {color}"),
    }
}

fn positions_phrase(n: usize, positions: &[Pos]) -> String {
    match positions {
        [one] => format!("position {}", position_name(n, *one)),
        many => {
            let names: Vec<String> = many.iter().map(|p| position_name(n, *p)).collect();
            format!("one of positions {}", join_or(&names))
        }
    }
}

/// Clue sentence, e.g. "Blake is sitting on the far right."
pub fn render_clue(clue: &Clue) -> String {
    let end = |e: &End| match e {
        End::Left => "left",
        End::Right => "right",
    };
    match clue {
        Clue::AtEnd(e, side) => format!("{} is sitting on the far {}.", capitalize(&entity_phrase(e)), end(side)),
        Clue::NotAtEnd(e, side) => {
            format!("{} is not sitting on the far {}.", capitalize(&entity_phrase(e)), end(side))
        }
        Clue::SomewhereRightOf(a, b) => {
            format!("{} is somewhere to the right of {}.", capitalize(&entity_phrase(a)), entity_phrase(b))
        }
        Clue::SomewhereLeftOf(a, b) => {
            format!("{} is somewhere to the left of {}.", capitalize(&entity_phrase(a)), entity_phrase(b))
        }
    }
}

/// Puzzle statement: setting sentence plus the clue list.
pub fn render_puzzle(p: &Puzzle) -> String {
    let mut out = format!(
        "{} are sitting in a row on {} chairs. They are wearing shirts with colors {}. \
         Each of them is wearing a different color.\nClues:\n",
        join_with(&p.names, "and"),
        p.n(),
        join_with(&p.colors, "and"),
    );
    for clue in &p.clues {
        out.push_str(&render_clue(clue));
        out.push('\n');
    }
    out
}

/// "Ava (Color red, position left), Blake (Color pink, position right)",
/// seats in order.
pub fn render_answer(arr: &Arrangement) -> String {
    let n = arr.person_at.len();
    let parts: Vec<String> = arr
        .person_at
        .iter()
        .zip(&arr.color_at)
        .enumerate()
        .map(|(pos, (name, color))| format!("{name} (Color {color}, position {})", position_name(n, pos)))
        .collect();
    parts.join(", ")
}

pub fn render_final_answer(arr: &Arrangement) -> String {
    let mut h = BTreeMap::new();
    h.insert("answer", render_answer(arr));
    fill(template("final_answer").skeleton, &h)
}

/// Renders any claim through the first template that produces it; used
/// to build synthetic erroneous generations.
pub fn render_claim(claim: &Claim, u: &Universe) -> Option<String> {
    let detail = match claim.clone() {
        Claim::PersonAt { name, pos } => StepDetail::PersonAtByClue { name, pos },
        Claim::PersonNotAt { name, pos } => StepDetail::PersonNotAtByClue { name, pos },
        Claim::ColorAt { color, pos } => StepDetail::ColorAtByClue { color, pos },
        Claim::ColorNotAt { color, pos } => StepDetail::ColorNotAtByClue { color, pos },
        Claim::PersonWears { name, color } => StepDetail::PersonWears { name, color },
        Claim::PersonWearsAt { name, color, pos } => StepDetail::PersonWearsAt { name, color, pos },
        Claim::Done => return None,
        Claim::FinalAnswer { arrangement } => return Some(render_final_answer(&arrangement)),
    };
    Some(render_step(&detail, u.n()))
}

/// Every claim-bearing step a universe's vocabulary can produce: each
/// template instantiated over all names, colors, positions and (for
/// relative steps) every non-empty set of reason positions. The parser's
/// round-trip guarantee is stated over exactly this set.
pub fn claim_bearing_details(u: &Universe) -> Vec<StepDetail> {
    use StepDetail as D;
    let n = u.n();
    let subsets: Vec<Vec<Pos>> = (1u32..(1 << n)).map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect();
    let entities: Vec<Entity> =
        u.names.iter().map(|s| Entity::person(s)).chain(u.colors.iter().map(|c| Entity::color(c))).collect();
    let mut out = Vec::new();
    for pos in 0..n {
        for name in &u.names {
            out.push(D::PersonAtByClue { name: name.clone(), pos });
            out.push(D::PersonNotAtByClue { name: name.clone(), pos });
            out.push(D::OnlyPerson { name: name.clone(), pos });
            for at in 0..n {
                out.push(D::PersonElsewhere { name: name.clone(), pos, at });
            }
            for occupant in &u.names {
                out.push(D::PersonDisplaced { name: name.clone(), pos, occupant: occupant.clone() });
            }
            for color in &u.colors {
                out.push(D::PersonWearsAt { name: name.clone(), color: color.clone(), pos });
                out.push(D::PositionHas { name: name.clone(), color: color.clone(), pos });
            }
        }
        for color in &u.colors {
            out.push(D::ColorAtByClue { color: color.clone(), pos });
            out.push(D::ColorNotAtByClue { color: color.clone(), pos });
            out.push(D::OnlyColor { color: color.clone(), pos });
            for at in 0..n {
                out.push(D::ColorElsewhere { color: color.clone(), pos, at });
            }
            for occupant in &u.colors {
                out.push(D::ColorDisplaced { color: color.clone(), pos, occupant: occupant.clone() });
            }
        }
        for reason in &entities {
            for target in entities.iter().filter(|t| *t != reason) {
                for reason_positions in &subsets {
                    out.push(D::RelativeMust {
                        reason: reason.clone(),
                        reason_positions: reason_positions.clone(),
                        target: target.clone(),
                        pos,
                    });
                    out.push(D::RelativeNot {
                        reason: reason.clone(),
                        reason_positions: reason_positions.clone(),
                        target: target.clone(),
                        pos,
                    });
                }
            }
        }
    }
    for name in &u.names {
        for color in &u.colors {
            out.push(D::PersonWears { name: name.clone(), color: color.clone() });
        }
    }
    out
}
