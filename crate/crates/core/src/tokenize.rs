//! Reference tokenizer for runs without a model tokenizer.
//!
//! A token is either a maximal run of alphanumeric characters or a single
//! character that is neither alphanumeric nor whitespace. Whitespace never
//! belongs to a token. Spans are `[start, end)` offsets in characters
//! (Unicode scalar values), not bytes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut count = 0;
    for (i, ch) in text.chars().enumerate() {
        count = i + 1;
        if ch.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            out.push(TokenSpan { start: s, end: i });
        }
        if !ch.is_whitespace() {
            out.push(TokenSpan { start: i, end: i + 1 });
        }
    }
    if let Some(s) = run_start {
        out.push(TokenSpan { start: s, end: count });
    }
    out
}

/// Token texts for the given spans.
pub fn token_texts<'a>(text: &'a str, spans: &[TokenSpan]) -> Vec<&'a str> {
    let offsets = CharOffsets::new(text);
    spans.iter().map(|s| &text[offsets.byte(s.start)..offsets.byte(s.end)]).collect()
}

/// Indices `[first, last]` of the tokens overlapping a character range.
pub fn covering_tokens(spans: &[TokenSpan], start: usize, end: usize) -> Option<(usize, usize)> {
    let first = spans.iter().position(|t| t.end > start && t.start < end)?;
    let last = spans.iter().rposition(|t| t.end > start && t.start < end)?;
    Some((first, last))
}

/// Character <-> byte offset conversion for one string.
pub struct CharOffsets {
    /// byte offset of each char, plus the total length at the end
    bytes: Vec<usize>,
}

impl CharOffsets {
    pub fn new(text: &str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        CharOffsets { bytes }
    }

    pub fn byte(&self, char_offset: usize) -> usize {
        self.bytes[char_offset]
    }

    pub fn char(&self, byte_offset: usize) -> usize {
        self.bytes.partition_point(|&b| b < byte_offset)
    }

    pub fn char_len(&self) -> usize {
        self.bytes.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        let text = "Position right must have Blake because they're the only person left.";
        let toks = token_texts(text, &tokenize(text));
        assert_eq!(
            toks,
            ["Position", "right", "must", "have", "Blake", "because", "they", "'", "re", "the", "only", "person", "left", "."]
        );
    }

    #[test]
    fn char_offsets_for_non_ascii() {
        let text = "Zoë sits.";
        let spans = tokenize(text);
        assert_eq!(spans[0], TokenSpan { start: 0, end: 3 });
        assert_eq!(token_texts(text, &spans), ["Zoë", "sits", "."]);
        let off = CharOffsets::new(text);
        assert_eq!(off.char(off.byte(4)), 4);
    }

    #[test]
    fn covering() {
        let spans = tokenize("a bb ccc.");
        assert_eq!(covering_tokens(&spans, 2, 8), Some((1, 2)));
        assert_eq!(covering_tokens(&spans, 1, 2), None);
        assert!(tokenize("  \n ").is_empty());
    }
}
