//! Line-delimited file schemas. Each record starts with its schema version
//! and keeps a fixed field order.

use apz_core::isomorphism::Split;
use apz_core::parser::LabeledStatement;
use apz_core::solver::ReasoningTrace;
use apz_core::Puzzle;
use apz_probe::abstraction::{Condition, LineRef};
use apz_probe::classifier::Metrics;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const PUZZLES: &str = "puzzles.jsonl";
pub const TRACES: &str = "traces.jsonl";
pub const SIDECARS: &str = "sidecars.jsonl";
pub const ACTIVATIONS_DIR: &str = "activations";
pub const LABELS: &str = "labels.jsonl";
pub const SPLIT: &str = "split.jsonl";
pub const MODELS_DIR: &str = "models";
pub const TRAIN_HISTORY: &str = "train_history.jsonl";
pub const EVAL: &str = "eval.jsonl";
pub const ABSTRACTION: &str = "abstraction.jsonl";
pub const ABSTRACTION_PAIRS: &str = "abstraction_pairs.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub puzzle: Puzzle,
    /// Id of the puzzle this one is a renamed copy of.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_of: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub trace: ReasoningTrace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub schema_version: u32,
    pub puzzle_id: String,
    /// Position of the statement within its puzzle's text.
    pub statement_index: usize,
    #[serde(flatten)]
    pub statement: LabeledStatement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLine {
    pub schema_version: u32,
    pub id: String,
    /// SHA-256 of the canonical isomorphism key.
    pub key_digest: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub schema_version: u32,
    pub model: String,
    pub layers: Vec<usize>,
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema_version: u32,
    pub model: String,
    pub layers: Vec<usize>,
    pub split: Split,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionRecord {
    pub schema_version: u32,
    pub layer: usize,
    pub condition: Condition,
    /// Two-stage mean correlation; absent when no pair was usable.
    pub mean: Option<f64>,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub schema_version: u32,
    pub condition: Condition,
    pub left: LineRef,
    pub right: LineRef,
}

pub fn model_name(layers: &[usize]) -> String {
    let parts: Vec<String> = layers.iter().map(|l| l.to_string()).collect();
    format!("layers-{}", parts.join("-"))
}

pub fn activation_path(puzzle_id: &str) -> String {
    format!("{ACTIVATIONS_DIR}/{puzzle_id}.apzact")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn puzzle_record_is_flat_and_versioned_first() {
        let rec = PuzzleRecord { schema_version: 1, puzzle: apz_core::fixtures::ava_blake(), variant_of: None };
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.starts_with("{\"schema_version\":1,\"id\":\"ava-blake\",\"names\":"), "{line}");
        assert!(!line.contains("variant_of"));
        assert_eq!(serde_json::from_str::<PuzzleRecord>(&line).unwrap(), rec);
    }

    #[test]
    fn names() {
        assert_eq!(model_name(&[4]), "layers-4");
        assert_eq!(model_name(&[4, 5]), "layers-4-5");
        assert_eq!(activation_path("n3-00"), "activations/n3-00.apzact");
    }
}
