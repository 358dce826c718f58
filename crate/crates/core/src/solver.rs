//! Deterministic set-elimination solver that narrates every update.
//!
//! Schedule: clues are applied in listed order; after each application the
//! state is propagated to a fixpoint by repeating
//! `[person scan, compositions, color scan, compositions]`; clue passes
//! repeat until the puzzle is solved or a full pass changes nothing.
//!
//! * A scan looks at seats in order. A seat with a single remaining
//!   candidate places that candidate: its other seats are eliminated one
//!   sentence each, or, if none remain, the seat is announced as the only
//!   option left. Failing that, an entity with a single remaining seat
//!   evicts the other candidates from that seat.
//! * A composition fires at a seat once its person (or color) has been
//!   placed by a scan and the other attribute of that seat is down to one
//!   candidate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{resolve_all, Arrangement, Claim, ClueRef, End, EntityRef, Pos, Puzzle, Universe};
use crate::text::{render_step, StepDetail, StepKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub text: String,
    pub claim: Option<Claim>,
    pub kind: StepKind,
    pub detail: StepDetail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub puzzle_id: String,
    pub steps: Vec<ReasoningStep>,
    #[serde(rename = "final")]
    pub final_arrangement: Arrangement,
}

impl ReasoningTrace {
    /// Steps one per line followed by the final-answer line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&step.text);
            out.push('\n');
        }
        out.push_str(&crate::text::render_final_answer(&self.final_arrangement));
        out.push('\n');
        out
    }
}

/// Which of the two seat matrices a scan works on.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    People,
    Colors,
}

/// Possibility sets. `person_color` is the person-indexed view of who may
/// wear what, narrowed only by person compositions; `color_wearer` is the
/// color-indexed view, narrowed only by color compositions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PossibilityState {
    n: usize,
    pub person_pos: Vec<Vec<bool>>,
    pub color_pos: Vec<Vec<bool>>,
    pub person_color: Vec<Vec<bool>>,
    pub color_wearer: Vec<Vec<bool>>,
    placed_person: Vec<Option<Pos>>,
    placed_color: Vec<Option<Pos>>,
}

impl PossibilityState {
    pub fn new(n: usize) -> Self {
        let full = vec![vec![true; n]; n];
        PossibilityState {
            n,
            person_pos: full.clone(),
            color_pos: full.clone(),
            person_color: full.clone(),
            color_wearer: full,
            placed_person: vec![None; n],
            placed_color: vec![None; n],
        }
    }

    /// Number of cells still possible across all matrices.
    pub fn open_cells(&self) -> usize {
        [&self.person_pos, &self.color_pos, &self.person_color, &self.color_wearer]
            .iter()
            .map(|m| m.iter().flatten().filter(|&&x| x).count())
            .sum()
    }

    pub fn solved(&self) -> bool {
        let single = |m: &Vec<Vec<bool>>| m.iter().all(|row| row.iter().filter(|&&x| x).count() == 1);
        self.placed_person.iter().all(Option::is_some)
            && self.placed_color.iter().all(Option::is_some)
            && single(&self.person_color)
            && single(&self.color_wearer)
    }

    fn matrix(&self, side: Side) -> &Vec<Vec<bool>> {
        match side {
            Side::People => &self.person_pos,
            Side::Colors => &self.color_pos,
        }
    }

    fn matrix_mut(&mut self, side: Side) -> &mut Vec<Vec<bool>> {
        match side {
            Side::People => &mut self.person_pos,
            Side::Colors => &mut self.color_pos,
        }
    }

    fn row_of(&self, e: EntityRef) -> &Vec<bool> {
        match e {
            EntityRef::Person(i) => &self.person_pos[i],
            EntityRef::Color(c) => &self.color_pos[c],
        }
    }

    fn row_of_mut(&mut self, e: EntityRef) -> &mut Vec<bool> {
        match e {
            EntityRef::Person(i) => &mut self.person_pos[i],
            EntityRef::Color(c) => &mut self.color_pos[c],
        }
    }

    fn positions(&self, e: EntityRef) -> Vec<Pos> {
        ones(self.row_of(e))
    }

    fn column(&self, side: Side, pos: Pos) -> Vec<usize> {
        (0..self.n).filter(|&e| self.matrix(side)[e][pos]).collect()
    }
}

fn ones(row: &[bool]) -> Vec<usize> {
    row.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect()
}

struct Run<'a> {
    u: &'a Universe,
    state: PossibilityState,
    steps: Vec<ReasoningStep>,
    open_after_step: Option<Vec<usize>>,
}

impl<'a> Run<'a> {
    fn emit(&mut self, detail: StepDetail) {
        let text = render_step(&detail, self.u.n());
        self.steps.push(ReasoningStep {
            index: self.steps.len(),
            text,
            claim: detail.claim(),
            kind: detail.kind(),
            detail,
        });
        if let Some(log) = &mut self.open_after_step {
            log.push(self.state.open_cells());
        }
    }

    fn entity_name(&self, e: EntityRef) -> String {
        match e {
            EntityRef::Person(i) => self.u.names[i].clone(),
            EntityRef::Color(c) => self.u.colors[c].clone(),
        }
    }

    fn describe(&self, e: EntityRef) -> String {
        match e {
            EntityRef::Person(i) => self.u.names[i].clone(),
            EntityRef::Color(c) => format!("the person wearing {}", self.u.colors[c]),
        }
    }

    fn check_row(&self, e: EntityRef) -> Result<()> {
        if self.state.row_of(e).iter().any(|&x| x) {
            Ok(())
        } else {
            Err(Error::Contradiction(self.describe(e)))
        }
    }

    fn check_columns(&self, side: Side) -> Result<()> {
        for pos in 0..self.u.n() {
            if self.state.column(side, pos).is_empty() {
                let what = if side == Side::People { "person" } else { "color" };
                return Err(Error::Contradiction(format!("{what} at position {}", self.u.position_name(pos))));
            }
        }
        Ok(())
    }

    /// Applies one clue against the current sets. Returns the details of
    /// the resulting updates (no header).
    fn apply_clue(&mut self, clue: ClueRef) -> Result<Vec<StepDetail>> {
        let n = self.u.n();
        let mut out = Vec::new();
        match clue {
            ClueRef::AtEnd(e, end) => {
                let target = if end == End::Left { 0 } else { n - 1 };
                let row = self.state.row_of_mut(e);
                if !row[target] {
                    return Err(Error::Contradiction(self.describe(e)));
                }
                if row.iter().filter(|&&x| x).count() > 1 {
                    row.iter_mut().enumerate().for_each(|(p, x)| *x = p == target);
                    out.push(match e {
                        EntityRef::Person(_) => StepDetail::PersonAtByClue { name: self.entity_name(e), pos: target },
                        EntityRef::Color(_) => StepDetail::ColorAtByClue { color: self.entity_name(e), pos: target },
                    });
                }
            }
            ClueRef::NotAtEnd(e, end) => {
                let target = if end == End::Left { 0 } else { n - 1 };
                let row = self.state.row_of_mut(e);
                if row[target] {
                    row[target] = false;
                    self.check_row(e)?;
                    out.push(match e {
                        EntityRef::Person(_) => StepDetail::PersonNotAtByClue { name: self.entity_name(e), pos: target },
                        EntityRef::Color(_) => StepDetail::ColorNotAtByClue { color: self.entity_name(e), pos: target },
                    });
                }
            }
            ClueRef::RightOf(a, b) => {
                // a strictly right of b: a > min(b), b < max(a)
                let bound = *self.state.positions(b).first().expect("checked non-empty");
                self.prune_relative(a, b, |p| p <= bound, &mut out)?;
                let bound = *self.state.positions(a).last().expect("checked non-empty");
                self.prune_relative(b, a, |p| p >= bound, &mut out)?;
            }
            ClueRef::LeftOf(a, b) => {
                let bound = *self.state.positions(b).last().expect("checked non-empty");
                self.prune_relative(a, b, |p| p >= bound, &mut out)?;
                let bound = *self.state.positions(a).first().expect("checked non-empty");
                self.prune_relative(b, a, |p| p <= bound, &mut out)?;
            }
        }
        Ok(out)
    }

    fn prune_relative(
        &mut self,
        target: EntityRef,
        reason: EntityRef,
        excluded: impl Fn(Pos) -> bool,
        out: &mut Vec<StepDetail>,
    ) -> Result<()> {
        let reason_positions = self.state.positions(reason);
        let removed: Vec<Pos> = self.state.positions(target).into_iter().filter(|&p| excluded(p)).collect();
        if removed.is_empty() {
            return Ok(());
        }
        for &p in &removed {
            self.state.row_of_mut(target)[p] = false;
        }
        self.check_row(target)?;
        let reason_e = reason.to_entity(self.u);
        let target_e = target.to_entity(self.u);
        let remaining = self.state.positions(target);
        if let [only] = remaining[..] {
            out.push(StepDetail::RelativeMust { reason: reason_e, reason_positions, target: target_e, pos: only });
        } else {
            for p in removed {
                out.push(StepDetail::RelativeNot {
                    reason: reason_e.clone(),
                    reason_positions: reason_positions.clone(),
                    target: target_e.clone(),
                    pos: p,
                });
            }
        }
        Ok(())
    }

    /// Seat scan on one side until nothing fires. Returns whether anything
    /// changed.
    fn scan(&mut self, side: Side) -> Result<bool> {
        let n = self.u.n();
        let mut any = false;
        loop {
            self.check_columns(side)?;
            if let Some((e, pos)) = (0..n).find_map(|pos| match self.state.column(side, pos)[..] {
                [e] if self.placed(side, e).is_none() => Some((e, pos)),
                _ => None,
            }) {
                let others: Vec<Pos> = ones(&self.state.matrix(side)[e]).into_iter().filter(|&q| q != pos).collect();
                let name = self.name_on(side, e);
                if others.is_empty() {
                    self.set_placed(side, e, pos);
                    self.emit(match side {
                        Side::People => StepDetail::OnlyPerson { name, pos },
                        Side::Colors => StepDetail::OnlyColor { color: name, pos },
                    });
                } else {
                    self.set_placed(side, e, pos);
                    for q in others {
                        self.state.matrix_mut(side)[e][q] = false;
                        self.emit(match side {
                            Side::People => StepDetail::PersonElsewhere { name: name.clone(), pos: q, at: pos },
                            Side::Colors => StepDetail::ColorElsewhere { color: name.clone(), pos: q, at: pos },
                        });
                    }
                }
                any = true;
                continue;
            }
            // an entity with one seat left evicts the other candidates there
            let mut evicted = false;
            for e in 0..n {
                let row = ones(&self.state.matrix(side)[e]);
                match row[..] {
                    [] => {
                        let r = if side == Side::People { EntityRef::Person(e) } else { EntityRef::Color(e) };
                        return Err(Error::Contradiction(self.describe(r)));
                    }
                    [pos] => {
                        let rivals: Vec<usize> =
                            self.state.column(side, pos).into_iter().filter(|&f| f != e).collect();
                        if rivals.is_empty() {
                            continue;
                        }
                        let occupant = self.name_on(side, e);
                        for f in rivals {
                            self.state.matrix_mut(side)[f][pos] = false;
                            let name = self.name_on(side, f);
                            self.emit(match side {
                                Side::People => {
                                    StepDetail::PersonDisplaced { name, pos, occupant: occupant.clone() }
                                }
                                Side::Colors => {
                                    StepDetail::ColorDisplaced { color: name, pos, occupant: occupant.clone() }
                                }
                            });
                        }
                        evicted = true;
                        break;
                    }
                    _ => {}
                }
            }
            if !evicted {
                return Ok(any);
            }
            any = true;
        }
    }

    fn placed(&self, side: Side, e: usize) -> Option<Pos> {
        match side {
            Side::People => self.state.placed_person[e],
            Side::Colors => self.state.placed_color[e],
        }
    }

    fn set_placed(&mut self, side: Side, e: usize, pos: Pos) {
        match side {
            Side::People => self.state.placed_person[e] = Some(pos),
            Side::Colors => self.state.placed_color[e] = Some(pos),
        }
    }

    fn name_on(&self, side: Side, e: usize) -> String {
        match side {
            Side::People => self.u.names[e].clone(),
            Side::Colors => self.u.colors[e].clone(),
        }
    }

    /// Person-color compositions, seat by seat (person first, then color).
    fn compose(&mut self) -> Result<bool> {
        let n = self.u.n();
        let mut any = false;
        for pos in 0..n {
            if let Some(x) = (0..n).find(|&x| self.state.placed_person[x] == Some(pos)) {
                if let [c] = self.state.column(Side::Colors, pos)[..] {
                    let options = ones(&self.state.person_color[x]);
                    if !options.contains(&c) {
                        return Err(Error::Contradiction(self.u.names[x].clone()));
                    }
                    if options.len() > 1 {
                        let mut names: Vec<String> = options.iter().map(|&d| self.u.colors[d].clone()).collect();
                        names.sort();
                        let (name, color) = (self.u.names[x].clone(), self.u.colors[c].clone());
                        self.state.person_color[x].iter_mut().enumerate().for_each(|(d, v)| *v = d == c);
                        self.emit(StepDetail::PersonWearsContext {
                            name: name.clone(),
                            options: names,
                            pos,
                            color: color.clone(),
                        });
                        self.emit(StepDetail::PersonWearsAt { name, color, pos });
                        any = true;
                    }
                }
            }
            if let Some(c) = (0..n).find(|&c| self.state.placed_color[c] == Some(pos)) {
                if let [x] = self.state.column(Side::People, pos)[..] {
                    let options = ones(&self.state.color_wearer[c]);
                    if !options.contains(&x) {
                        return Err(Error::Contradiction(format!("the person wearing {}", self.u.colors[c])));
                    }
                    if options.len() > 1 {
                        let mut names: Vec<String> = options.iter().map(|&y| self.u.names[y].clone()).collect();
                        names.sort();
                        let (name, color) = (self.u.names[x].clone(), self.u.colors[c].clone());
                        self.state.color_wearer[c].iter_mut().enumerate().for_each(|(y, v)| *v = y == x);
                        self.emit(StepDetail::ColorWornContext {
                            color: color.clone(),
                            options: names,
                            pos,
                            name: name.clone(),
                        });
                        self.emit(StepDetail::PositionHas { name, color, pos });
                        any = true;
                    }
                }
            }
        }
        Ok(any)
    }

    fn propagate(&mut self) -> Result<()> {
        loop {
            let mut any = self.scan(Side::People)?;
            any |= self.compose()?;
            any |= self.scan(Side::Colors)?;
            any |= self.compose()?;
            if !any {
                return Ok(());
            }
        }
    }

    fn final_arrangement(&self) -> Arrangement {
        let n = self.u.n();
        let mut person_at = vec![String::new(); n];
        let mut color_at = vec![String::new(); n];
        for (i, pos) in self.state.placed_person.iter().enumerate() {
            person_at[pos.expect("solved")] = self.u.names[i].clone();
        }
        for (c, pos) in self.state.placed_color.iter().enumerate() {
            color_at[pos.expect("solved")] = self.u.colors[c].clone();
        }
        Arrangement { person_at, color_at }
    }
}

fn run(puzzle: &Puzzle, record_open_cells: bool) -> Result<(ReasoningTrace, Option<Vec<usize>>)> {
    let u = puzzle.universe();
    u.validate()?;
    let clues = resolve_all(&puzzle.clues, &u)?;
    let mut r = Run {
        u: &u,
        state: PossibilityState::new(u.n()),
        steps: Vec::new(),
        open_after_step: record_open_cells.then(Vec::new),
    };
    loop {
        let before = r.steps.len();
        for (clue, resolved) in puzzle.clues.iter().zip(&clues) {
            let updates = r.apply_clue(*resolved)?;
            if !updates.is_empty() {
                r.emit(StepDetail::ClueHeader { clue: clue.clone() });
                for d in updates {
                    r.emit(d);
                }
            }
            r.propagate()?;
            if r.state.solved() {
                r.emit(StepDetail::Done);
                let trace = ReasoningTrace {
                    puzzle_id: puzzle.id.clone(),
                    final_arrangement: r.final_arrangement(),
                    steps: r.steps,
                };
                return Ok((trace, r.open_after_step));
            }
        }
        if r.steps.len() == before {
            return Err(Error::Stalled { steps: before });
        }
    }
}

/// Solves `puzzle` by propagation, narrating every update.
pub fn solve_with_trace(puzzle: &Puzzle) -> Result<ReasoningTrace> {
    run(puzzle, false).map(|(t, _)| t)
}

/// Like [`solve_with_trace`], also returning the number of open cells
/// after each emitted step.
pub fn solve_with_open_cells(puzzle: &Puzzle) -> Result<(ReasoningTrace, Vec<usize>)> {
    run(puzzle, true).map(|(t, log)| (t, log.expect("recorded")))
}

/// The kind-level summary of a trace, used by tests and reports.
pub fn kinds(trace: &ReasoningTrace) -> Vec<StepKind> {
    trace.steps.iter().map(|s| s.kind).collect()
}
