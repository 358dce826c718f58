use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("unknown color {0:?}")]
    UnknownColor(String),
    #[error("position {0} outside the puzzle")]
    UnknownPosition(usize),
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),
    #[error("invalid arrangement: {0}")]
    InvalidArrangement(String),
    #[error("n = {n} exceeds the exhaustive bound of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("puzzle invariant violated: {0}")]
    PuzzleInvariant(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no solver-solvable minimal puzzle after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("clues do not have exactly one solution ({count} found)")]
    NotUnique { count: usize },
    #[error("contradiction: {0} has no remaining option")]
    Contradiction(String),
    #[error("propagation stalled after {steps} steps with the puzzle unsolved")]
    Stalled { steps: usize },
    #[error("invalid split request: {0}")]
    InvalidSplit(String),
}
