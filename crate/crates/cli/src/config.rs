//! Declarative stage configuration.
//!
//! One TOML file carries a table per stage. Every field has a default and
//! unknown keys are rejected; the effective configuration of a stage,
//! defaults included, is written into the run manifest.

use std::path::Path;

use apz_core::generator::{DEFAULT_COLORS, DEFAULT_NAMES};
use apz_core::isomorphism::Split;
use apz_probe::synth::{LayerMix, TokenContext};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub solve: SolveConfig,
    pub synth: SynthConfig,
    pub extract: ExtractConfig,
    pub label: LabelConfig,
    pub split: SplitConfig,
    pub train: TrainStageConfig,
    pub eval: EvalConfig,
    pub abstraction: AbstractionConfig,
    pub validate: ValidateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
            _ => CliError::io(path, e),
        })?;
        Self::parse(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Range checks that serde cannot express.
    pub fn check(&self) -> std::result::Result<(), String> {
        let g = &self.gen;
        if g.count == 0 {
            return Err("gen.count must be positive".into());
        }
        let s = &self.synth;
        if !(0.0..=1.0).contains(&s.perturb_rate) {
            return Err(format!("synth.perturb_rate {} outside [0, 1]", s.perturb_rate));
        }
        if s.layers.is_empty() {
            return Err("synth.layers must list at least one layer".into());
        }
        let f = self.split.fractions;
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("split.fractions {f:?} must be non-negative and sum to 1"));
        }
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 || !(t.learning_rate > 0.0) {
            return Err("train.epochs, train.batch_size and train.learning_rate must be positive".into());
        }
        if t.layer_sets.iter().any(Vec::is_empty) {
            return Err("train.layer_sets entries must be non-empty".into());
        }
        if self.abstraction.pairs == 0 {
            return Err("abstraction.pairs must be positive".into());
        }
        if let Some(r) = self.label.max_unmatched_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("label.max_unmatched_rate {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    pub count: usize,
    pub max_attempts: u32,
    pub name_pool: Vec<String>,
    pub color_pool: Vec<String>,
    /// Renamed copies emitted per generated puzzle. Copies keep clue and
    /// vocabulary order, so they share the original's isomorphism class
    /// and have isomorphic traces.
    pub variants: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 3,
            count: 100,
            max_attempts: 100,
            name_pool: DEFAULT_NAMES.iter().map(|s| s.to_string()).collect(),
            color_pool: DEFAULT_COLORS.iter().map(|s| s.to_string()).collect(),
            variants: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub hidden_dim: usize,
    /// Probability that a claim-bearing step is rewritten into a false one.
    pub perturb_rate: f64,
    pub token_context: TokenContext,
    /// One component mix per synthetic layer.
    pub layers: Vec<LayerMix>,
}

impl Default for SynthConfig {
    /// Eight layers, correctness planted in layers 4–6.
    fn default() -> Self {
        let layers = (0..8)
            .map(|l| LayerMix {
                token: 1.0,
                role: 1.0,
                correctness: if (4..=6).contains(&l) { 1.0 } else { 0.0 },
                noise: 1.0,
            })
            .collect();
        SynthConfig { hidden_dim: 64, perturb_rate: 0.5, token_context: TokenContext::LinePrefix, layers }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Program and arguments. `{puzzles}`, `{traces}`, `{out_dir}` and
    /// `{seed}` are substituted in every argument.
    pub command: Vec<String>,
    /// Fail unless every puzzle comes back with a valid file pair.
    pub require_all: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Fail the stage when the unmatched-sentence rate exceeds this.
    pub max_unmatched_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation, test.
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { fractions: [0.8, 0.1, 0.1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainStageConfig {
    /// One probe per entry; empty means one probe per available layer.
    pub layer_sets: Vec<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub conv_channels: usize,
    pub hidden: [usize; 2],
    pub standardize: bool,
}

impl Default for TrainStageConfig {
    fn default() -> Self {
        let p = apz_probe::classifier::TrainConfig::default();
        TrainStageConfig {
            layer_sets: Vec::new(),
            epochs: p.epochs,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            conv_channels: p.conv_channels,
            hidden: p.hidden,
            standardize: p.standardize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub splits: Vec<Split>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { splits: vec![Split::Validation, Split::Test] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractionConfig {
    /// Pairs sampled per condition.
    pub pairs: usize,
    /// Empty means every layer.
    pub layers: Vec<usize>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig { pairs: 1000, layers: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Puzzles re-checked by the expensive per-puzzle checks.
    pub sample: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { sample: 200 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let c = RunConfig::parse("[gen]\nn = 2\ncount = 7\n[split]\nfractions = [0.5, 0.25, 0.25]\n").unwrap();
        assert_eq!((c.gen.n, c.gen.count, c.gen.max_attempts), (2, 7, 100));
        assert_eq!(c.split.fractions, [0.5, 0.25, 0.25]);
        assert_eq!(c.synth, SynthConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(RunConfig::parse("[gen]\nsize = 3\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[split]\nfractions = [0.5, 0.5, 0.5]\n").is_err());
        assert!(RunConfig::parse("[synth]\nperturb_rate = 1.5\n").is_err());
        assert!(RunConfig::parse("[train]\nlayer_sets = [[]]\n").is_err());
    }

    #[test]
    fn synth_layers_from_toml() {
        let c = RunConfig::parse(
            "[synth]\nhidden_dim = 16\ntoken_context = \"isolated\"\nlayers = [{ token = 1.0, role = 0.0, correctness = 0.0, noise = 0.1 }]\n",
        )
        .unwrap();
        assert_eq!(c.synth.layers.len(), 1);
        assert_eq!(c.synth.token_context, TokenContext::Isolated);
    }
}
