//! Arrangement logic puzzles: seat people in shirt colors from positional
//! clues.
//!
//! * [`puzzle`] – vocabulary, claim checking and the brute-force oracle.
//! * [`generator`] – seeded construction of unique, non-redundant puzzles.
//! * [`solver`] – propagation solver emitting a sentence per update.
//! * [`text`] – the shared sentence-template table.
//! * [`parser`] – template extraction and correctness labeling of free text.
//! * [`isomorphism`] – canonical keys, class-disjoint splits, trace matching.
//! * [`tokenize`] – the reference whitespace/punctuation tokenizer.

pub mod error;
pub mod fixtures;
pub mod generator;
pub mod isomorphism;
pub mod parser;
pub mod puzzle;
pub mod rng;
pub mod solver;
pub mod text;
pub mod tokenize;

pub use error::{Error, Result};
pub use puzzle::{claim_holds, clue_satisfied, count_solutions, Arrangement, Claim, Clue, End, Entity, Puzzle, Universe};
pub use solver::{solve_with_trace, ReasoningStep, ReasoningTrace};
