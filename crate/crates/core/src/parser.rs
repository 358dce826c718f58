//! Template-based statement extraction and stepwise correctness labeling.
//!
//! Text is cut into sentences at `.` (kept) and newlines (dropped). Each
//! trimmed sentence is matched, whole, against the regex compiled from
//! every skeleton in [`crate::text::TEMPLATES`]; the longest skeleton wins
//! when several match. Name and color holes accept any capitalized /
//! lower-case word, and the captured words are then checked against the
//! puzzle vocabulary: claims mentioning anything outside it are dropped
//! and counted instead of returned.

use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::puzzle::{placement_satisfies, Arrangement, Claim, Universe};
use crate::text::{Template, TEMPLATES};
use crate::tokenize::{covering_tokens, CharOffsets, TokenSpan};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementSpan {
    /// Character offsets, end exclusive.
    pub start: usize,
    pub end: usize,
    pub claim: Claim,
    pub template_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Correct,
    Incorrect,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledStatement {
    pub span: StatementSpan,
    pub label: Label,
    /// Inclusive token indices covering the span, when token spans are known.
    pub token_range: Option<(usize, usize)>,
}

/// What a pass over a document found.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub spans: Vec<StatementSpan>,
    pub sentences: usize,
    /// Sentences matching a template that carries no claim (headers,
    /// context lines, the terminal line).
    pub non_claim_sentences: usize,
    /// Sentences matching a claim template but naming something outside
    /// the puzzle.
    pub unknown_vocabulary: usize,
    pub unmatched_sentences: usize,
}

impl ParseReport {
    pub fn unmatched_rate(&self) -> f64 {
        if self.sentences == 0 {
            0.0
        } else {
            self.unmatched_sentences as f64 / self.sentences as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub statements: Vec<LabeledStatement>,
    pub sentences: usize,
    pub unknown_vocabulary: usize,
    pub unmatched_sentences: usize,
}

struct Compiled {
    template: &'static Template,
    regex: Regex,
}

const NAME: &str = r"[A-Z][A-Za-z'\-]*";
const COLOR: &str = r"[a-z][a-z\-]*";
const CAP_COLOR: &str = r"[A-Z][a-z\-]*";
const POS: &str = r"left|right|[0-9]+";

fn hole_pattern(name: &str) -> String {
    match name {
        "person" | "person2" => NAME.to_string(),
        "color" | "color2" => COLOR.to_string(),
        "Color" => CAP_COLOR.to_string(),
        "pos" | "pos2" => POS.to_string(),
        "entity" => format!("the person wearing {COLOR}|{NAME}"),
        "positions" => format!("position (?:{POS})|one of positions (?:{POS})(?:(?:, | or )(?:{POS}))*"),
        "colors" => format!("{COLOR}(?:(?:, | or ){COLOR})*"),
        "persons" => format!("{NAME}(?:(?:, | or ){NAME})*"),
        "clue" => ".+".to_string(),
        "answer" => ".+?".to_string(),
        other => panic!("unknown hole {other}"),
    }
}

/// Regex source for a skeleton, anchored at both ends.
pub fn skeleton_regex(skeleton: &str) -> String {
    let mut out = String::from("^");
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        out.push_str(&regex::escape(&rest[..open]));
        let close = open + rest[open..].find('}').expect("unclosed hole");
        let name = &rest[open + 1..close];
        out.push_str(&format!("(?P<{name}>{})", hole_pattern(name)));
        rest = &rest[close + 1..];
    }
    out.push_str(&regex::escape(rest));
    if skeleton.ends_with('}') {
        // the final answer may or may not carry a full stop
        out.push_str(r"\.?");
    }
    out.push('$');
    out
}

fn compiled() -> &'static [Compiled] {
    static CELL: OnceLock<Vec<Compiled>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut v: Vec<Compiled> = TEMPLATES
            .iter()
            .map(|t| Compiled { template: t, regex: Regex::new(&skeleton_regex(t.skeleton)).expect("template regex") })
            .collect();
        // longest skeleton first; stable on ties
        v.sort_by_key(|c| std::cmp::Reverse(c.template.skeleton.len()));
        v
    })
}

fn answer_item() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| {
        Regex::new(&format!(r"^(?P<name>{NAME}) \(Color (?P<color>{COLOR}), position (?P<pos>{POS})\)$")).unwrap()
    })
}

/// Sentence byte ranges, trimmed, empty ones skipped.
fn sentences(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut push = |s: usize, e: usize| {
        let slice = &text[s..e];
        let lead = slice.len() - slice.trim_start().len();
        let trimmed = slice.trim();
        if !trimmed.is_empty() {
            out.push((s + lead, s + lead + trimmed.len()));
        }
    };
    for (i, ch) in text.char_indices() {
        match ch {
            '.' => {
                push(start, i + 1);
                start = i + 1;
            }
            '\n' => {
                push(start, i);
                start = i + 1;
            }
            _ => {}
        }
    }
    push(start, text.len());
    out
}

fn decapitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `it` fits the lower-case color pattern; the skeleton that spells the
/// pronoun out is the right reading.
fn plausible(caps: &Captures) -> bool {
    caps.name("color2").is_none_or(|m| m.as_str() != "it")
}

enum Extracted {
    Claim(Claim),
    NoClaim,
    Unknown,
}

/// Parses statements against one puzzle's vocabulary.
pub struct StatementParser<'u> {
    universe: &'u Universe,
}

impl<'u> StatementParser<'u> {
    pub fn new(universe: &'u Universe) -> Self {
        StatementParser { universe }
    }

    fn pos(&self, caps: &Captures, hole: &str) -> Option<usize> {
        self.universe.parse_position(caps.name(hole)?.as_str())
    }

    fn extract(&self, id: &str, caps: &Captures) -> Extracted {
        let s = |hole: &str| caps.name(hole).map(|m| m.as_str().to_string());
        let claim = match id {
            "person_at_by_clue" | "only_person" | "relative_person_must" => {
                self.pos(caps, "pos").map(|pos| Claim::PersonAt { name: s("person").unwrap(), pos })
            }
            "color_at_by_clue" | "only_color" | "relative_color_must" => {
                self.pos(caps, "pos").map(|pos| Claim::ColorAt { color: s("color").unwrap(), pos })
            }
            "person_not_at_by_clue" | "relative_person_not" | "person_elsewhere" | "person_displaced" => {
                self.pos(caps, "pos").map(|pos| Claim::PersonNotAt { name: s("person").unwrap(), pos })
            }
            "color_not_at_by_clue" | "relative_color_not" => {
                self.pos(caps, "pos").map(|pos| Claim::ColorNotAt { color: s("color").unwrap(), pos })
            }
            "color_elsewhere" | "color_displaced" => self
                .pos(caps, "pos")
                .map(|pos| Claim::ColorNotAt { color: decapitalize(&s("Color").unwrap()), pos }),
            "person_wears_at" | "position_has" => self.pos(caps, "pos").map(|pos| Claim::PersonWearsAt {
                name: s("person").unwrap(),
                color: s("color").unwrap(),
                pos,
            }),
            "person_wears" => Some(Claim::PersonWears { name: s("person").unwrap(), color: s("color").unwrap() }),
            "final_answer" => return self.final_answer(&s("answer").unwrap()),
            _ => return Extracted::NoClaim,
        };
        match claim {
            Some(c) if c.check_universe(self.universe).is_ok() => Extracted::Claim(c),
            _ => Extracted::Unknown,
        }
    }

    fn final_answer(&self, list: &str) -> Extracted {
        let n = self.universe.n();
        let mut person_at = vec![None; n];
        let mut color_at = vec![None; n];
        let items: Vec<&str> = list.split("), ").collect();
        let last = items.len().saturating_sub(1);
        for (i, item) in items.iter().enumerate() {
            let item = if i < last { format!("{item})") } else { item.to_string() };
            let Some(caps) = answer_item().captures(&item) else {
                return Extracted::Unknown;
            };
            let Some(pos) = self.universe.parse_position(&caps["pos"]) else {
                return Extracted::Unknown;
            };
            if person_at[pos].is_some() {
                return Extracted::Unknown;
            }
            person_at[pos] = Some(caps["name"].to_string());
            color_at[pos] = Some(caps["color"].to_string());
        }
        if person_at.iter().any(Option::is_none) {
            return Extracted::Unknown;
        }
        let arrangement = Arrangement {
            person_at: person_at.into_iter().map(Option::unwrap).collect(),
            color_at: color_at.into_iter().map(Option::unwrap).collect(),
        };
        let claim = Claim::FinalAnswer { arrangement };
        if claim.check_universe(self.universe).is_ok() {
            Extracted::Claim(claim)
        } else {
            Extracted::Unknown
        }
    }

    /// Full pass with diagnostics.
    pub fn parse_detailed(&self, text: &str) -> ParseReport {
        let offsets = CharOffsets::new(text);
        let mut report = ParseReport::default();
        for (bs, be) in sentences(text) {
            report.sentences += 1;
            let sentence = &text[bs..be];
            let Some((c, caps)) = compiled()
                .iter()
                .find_map(|c| c.regex.captures(sentence).filter(plausible).map(|caps| (c, caps)))
            else {
                report.unmatched_sentences += 1;
                continue;
            };
            match self.extract(c.template.id, &caps) {
                Extracted::Claim(claim) => report.spans.push(StatementSpan {
                    start: offsets.char(bs),
                    end: offsets.char(be),
                    claim,
                    template_id: c.template.id.to_string(),
                }),
                Extracted::NoClaim => report.non_claim_sentences += 1,
                Extracted::Unknown => report.unknown_vocabulary += 1,
            }
        }
        report
    }

    pub fn parse_statements(&self, text: &str) -> Vec<StatementSpan> {
        self.parse_detailed(text).spans
    }

    /// Parses and labels against the ground truth. `tokens`, when given,
    /// fills each statement's token range.
    pub fn label(&self, text: &str, solution: &Arrangement, tokens: Option<&[TokenSpan]>) -> Result<LabelReport> {
        let placement = self.universe.placement(solution)?;
        let report = self.parse_detailed(text);
        let statements = report
            .spans
            .into_iter()
            .map(|span| {
                let label = if placement_satisfies(&span.claim, &placement, self.universe) {
                    Label::Correct
                } else {
                    Label::Incorrect
                };
                let token_range = tokens.and_then(|t| covering_tokens(t, span.start, span.end));
                LabeledStatement { span, label, token_range }
            })
            .collect();
        Ok(LabelReport {
            statements,
            sentences: report.sentences,
            unknown_vocabulary: report.unknown_vocabulary,
            unmatched_sentences: report.unmatched_sentences,
        })
    }
}

/// All template matches in `text` for the given puzzle vocabulary.
pub fn parse_statements(text: &str, universe: &Universe) -> Vec<StatementSpan> {
    StatementParser::new(universe).parse_statements(text)
}

/// One labeled statement per parsed claim, in text order.
pub fn label_trace(text: &str, solution: &Arrangement, universe: &Universe) -> Result<LabelReport> {
    StatementParser::new(universe).label(text, solution, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::solve_with_trace;

    fn ab() -> Universe {
        fixtures::ava_blake().universe()
    }

    #[test]
    fn verbatim_lines_parse() {
        let u = ab();
        let spans = parse_statements("Blake must be at position right.", &u);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].claim, Claim::PersonAt { name: "Blake".into(), pos: 1 });
        assert_eq!((spans[0].start, spans[0].end), (0, 32));
        let spans = parse_statements("Therefore, Ava must be wearing red at position left.", &u);
        assert_eq!(spans[0].claim, Claim::PersonWearsAt { name: "Ava".into(), color: "red".into(), pos: 0 });
        assert!(parse_statements("The weather is nice today.", &u).is_empty());
    }

    #[test]
    fn colour_at_sentence_start() {
        let spans = parse_statements(
            "Red cannot be worn by someone at position right because it is worn by someone at position left.",
            &ab(),
        );
        assert_eq!(spans[0].claim, Claim::ColorNotAt { color: "red".into(), pos: 1 });
        assert_eq!(spans[0].template_id, "color_elsewhere");
    }

    #[test]
    fn case_sensitive_and_whitespace_tolerant() {
        let u = ab();
        assert!(parse_statements("ava must be at position right.", &u).is_empty());
        assert!(parse_statements("The person wearing Pink cannot be at position left.", &u).is_empty());
        let spans = parse_statements("   \t Blake must be at position right.   \n", &u);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].start, 5);
    }

    #[test]
    fn unknown_vocabulary_is_dropped_and_counted() {
        let u = ab();
        let r = StatementParser::new(&u).parse_detailed("Zed must be at position right. Blake must be at position 3.");
        assert!(r.spans.is_empty());
        assert_eq!(r.unknown_vocabulary, 2);
    }

    #[test]
    fn final_answer_line() {
        let u = ab();
        let p = fixtures::ava_blake();
        let text = "Final answer: Ava (Color red, position left), Blake (Color pink, position right)";
        let spans = parse_statements(text, &u);
        assert_eq!(spans[0].claim, Claim::FinalAnswer { arrangement: p.solution.clone() });
        let wrong = "Final answer: Blake (Color red, position left), Ava (Color pink, position right).";
        let r = label_trace(wrong, &p.solution, &u).unwrap();
        assert_eq!(r.statements[0].label, Label::Incorrect);
    }

    #[test]
    fn solver_trace_labels_all_correct() {
        let p = fixtures::ava_blake();
        let trace = solve_with_trace(&p).unwrap();
        let r = label_trace(&trace.render_text(), &p.solution, &p.universe()).unwrap();
        let claims = trace.steps.iter().filter(|s| s.claim.is_some() && s.claim != Some(Claim::Done)).count();
        assert_eq!(r.statements.len(), claims + 1);
        assert!(r.statements.iter().all(|s| s.label == Label::Correct));
        assert_eq!(r.unmatched_sentences, 0);
    }

    #[test]
    fn incorrect_and_empty() {
        let p = fixtures::ava_blake();
        let r = label_trace("Ava must be at position right.", &p.solution, &p.universe()).unwrap();
        assert_eq!(r.statements[0].label, Label::Incorrect);
        assert!(label_trace("", &p.solution, &p.universe()).unwrap().statements.is_empty());
    }

    #[test]
    fn one_sentence_per_line_in_paragraph_form() {
        let u = ab();
        let text = "Applying clue: Blake is sitting on the far right. Blake must be at position right. \
                    Ava cannot be at position right because they are at position left.";
        let r = StatementParser::new(&u).parse_detailed(text);
        assert_eq!(r.sentences, 3);
        assert_eq!(r.spans.len(), 2);
        assert_eq!(r.non_claim_sentences, 1);
    }

    #[test]
    fn token_ranges() {
        let p = fixtures::ava_blake();
        let text = "Hello. Blake must be at position right.";
        let toks = crate::tokenize::tokenize(text);
        let r = StatementParser::new(&p.universe()).label(text, &p.solution, Some(&toks)).unwrap();
        assert_eq!(r.statements[0].token_range, Some((2, 8)));
    }
}
