//! The pipeline stages. Each reads its inputs through the manifest's
//! digest check, does its per-puzzle work in parallel, writes its outputs
//! atomically in puzzle-id order and appends one manifest entry.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

use apz_core::generator::{generate_puzzle, GeneratorConfig};
use apz_core::isomorphism::{canonical_key, random_renaming, split_by_keys, IsomorphismKey, Split};
use apz_core::parser::{Label, LabeledStatement, StatementParser};
use apz_core::rng::{derive_seed, stage_seed};
use apz_core::solve_with_trace;
use apz_core::solver::ReasoningTrace;
use apz_core::tokenize::tokenize;
use apz_core::Puzzle;
use apz_probe::abstraction::{audit_pairs, layer_profile, sample_line_pairs, Condition, CorpusEntry, Sample};
use apz_probe::classifier::{
    build_examples, evaluate, train, CheckpointMeta, ExampleSource, ProbeExample, ProbeModel, TrainConfig,
};
use apz_probe::store::{Activations, Sidecar, SIDECAR_SCHEMA_VERSION};
use apz_probe::synth::{perturb_trace, synthesize_activations, SyntheticSpec};
use apz_probe::ProbeError;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{read_bytes, sha256_hex, to_jsonl, write_atomic};
use crate::manifest::{FileEntry, RunManifest, StageEntry};
use crate::records::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Gen,
    Solve,
    Synth,
    Extract,
    Label,
    Split,
    Train,
    Eval,
    Abstraction,
}

impl Stage {
    /// The synthetic pipeline, in run order.
    pub const SYNTHETIC: [Stage; 8] =
        [Stage::Gen, Stage::Solve, Stage::Synth, Stage::Label, Stage::Split, Stage::Train, Stage::Eval, Stage::Abstraction];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Solve => "solve",
            Stage::Synth => "synth",
            Stage::Extract => "extract",
            Stage::Label => "label",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Abstraction => "abstraction",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Stage::Gen,
            Stage::Solve,
            Stage::Synth,
            Stage::Extract,
            Stage::Label,
            Stage::Split,
            Stage::Train,
            Stage::Eval,
            Stage::Abstraction,
        ]
        .into_iter()
        .find(|st| st.name() == s)
        .ok_or_else(|| CliError::Schema(format!("unknown stage {s:?}")))
    }
}

/// Where and how a stage runs.
#[derive(Clone, Debug)]
pub struct Context {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub config: RunConfig,
}

impl Context {
    pub fn new(out_dir: impl Into<PathBuf>, seed: u64, config: RunConfig) -> Self {
        Context { out_dir: out_dir.into(), seed, config }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        stage_seed(self.seed, stage.name())
    }
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<StageEntry> {
    ctx.config.check().map_err(CliError::Schema)?;
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::io(&ctx.out_dir, e))?;
    let mut run = Run::open(ctx, stage)?;
    let seed = ctx.stage_seed(stage);
    let c = &ctx.config;
    let (config, summary) = match stage {
        Stage::Gen => (to_value(&c.gen), gen(&mut run, seed)?),
        Stage::Solve => (to_value(&c.solve), solve(&mut run)?),
        Stage::Synth => (to_value(&c.synth), synth(&mut run, seed)?),
        Stage::Extract => (to_value(&c.extract), extract(&mut run, seed)?),
        Stage::Label => (to_value(&c.label), label(&mut run)?),
        Stage::Split => (to_value(&c.split), split(&mut run, seed)?),
        Stage::Train => (to_value(&c.train), train_stage(&mut run, seed)?),
        Stage::Eval => (to_value(&c.eval), eval(&mut run)?),
        Stage::Abstraction => (to_value(&c.abstraction), abstraction(&mut run, seed)?),
    };
    run.finish(seed, config, summary)
}

/// Runs `stages` in order, stopping at the first failure.
pub fn run_pipeline(ctx: &Context, stages: &[Stage]) -> Result<Vec<StageEntry>> {
    stages.iter().map(|&s| run_stage(ctx, s)).collect()
}

fn to_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("configs serialize")
}

/// Bookkeeping for one stage run.
struct Run<'a> {
    ctx: &'a Context,
    stage: Stage,
    manifest: RunManifest,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    started: Instant,
}

/// A record type whose lines carry a schema version.
pub(crate) trait Versioned {
    const VERSION: u32;
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty => $v:expr),*) => {$(
        impl Versioned for $t {
            const VERSION: u32 = $v;
            fn version(&self) -> u32 {
                self.schema_version
            }
        }
    )*};
}

versioned!(
    PuzzleRecord => SCHEMA_VERSION,
    TraceRecord => SCHEMA_VERSION,
    LabelRecord => SCHEMA_VERSION,
    SplitLine => SCHEMA_VERSION,
    Sidecar => SIDECAR_SCHEMA_VERSION
);

impl<'a> Run<'a> {
    fn open(ctx: &'a Context, stage: Stage) -> Result<Self> {
        Ok(Run {
            ctx,
            stage,
            manifest: RunManifest::load_or_default(&ctx.out_dir)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    fn cfg(&self) -> &'a RunConfig {
        &self.ctx.config
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.ctx.out_dir.join(rel)
    }

    /// Reads an input and checks it against the digest the manifest
    /// recorded when a stage wrote it. Files no stage wrote are accepted
    /// and their digest is recorded.
    fn input(&mut self, rel: &str) -> Result<Vec<u8>> {
        let path = self.path(rel);
        let bytes = read_bytes(&path)?;
        let entry = FileEntry::of_bytes(rel, &bytes);
        if let Some(rec) = self.manifest.recorded(rel) {
            if rec.sha256 != entry.sha256 {
                return Err(CliError::DigestMismatch {
                    path,
                    expected: rec.sha256.clone(),
                    actual: entry.sha256,
                });
            }
        }
        self.inputs.push(entry);
        Ok(bytes)
    }

    fn input_jsonl<T: DeserializeOwned + Versioned>(&mut self, rel: &str) -> Result<Vec<T>> {
        let bytes = self.input(rel)?;
        parse_jsonl(&bytes, rel)
    }

    fn output(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(rel), bytes)?;
        self.outputs.push(FileEntry::of_bytes(rel, bytes));
        Ok(())
    }

    fn output_jsonl<T: Serialize>(&mut self, rel: &str, records: &[T]) -> Result<()> {
        self.output(rel, &to_jsonl(records)?)
    }

    /// Deletes files a previous run left in `dir` with `extension`.
    fn clear(&self, dir: &str, extension: &str) -> Result<()> {
        let dir = self.path(dir);
        let Ok(listing) = std::fs::read_dir(&dir) else { return Ok(()) };
        for item in listing {
            let p = item.map_err(|e| CliError::io(&dir, e))?.path();
            if p.extension().is_some_and(|x| x == extension) {
                std::fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
            }
        }
        Ok(())
    }

    fn finish(mut self, seed: u64, config: serde_json::Value, summary: serde_json::Value) -> Result<StageEntry> {
        let config_sha256 = sha256_hex(&serde_json::to_vec(&config).expect("json"));
        let entry = StageEntry {
            stage: self.stage.name().into(),
            top_seed: self.ctx.seed,
            seed,
            config,
            config_sha256,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
            summary,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        };
        self.manifest.stages.push(entry.clone());
        self.manifest.save(&self.ctx.out_dir)?;
        Ok(entry)
    }
}

pub(crate) fn parse_jsonl<T: DeserializeOwned + Versioned>(bytes: &[u8], rel: &str) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Schema(format!("{rel}: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(line).map_err(|e| CliError::Schema(format!("{rel} line {}: {e}", i + 1)))?;
        if rec.version() != T::VERSION {
            return Err(CliError::Schema(format!("{rel} line {}: schema version {}", i + 1, rec.version())));
        }
        out.push(rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------- gen

fn gen(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let g = &run.cfg().gen;
    let base = GeneratorConfig {
        n: g.n,
        name_pool: g.name_pool.clone(),
        color_pool: g.color_pool.clone(),
        seed: 0,
        max_attempts: g.max_attempts,
    };
    base.validate().map_err(|e| CliError::Schema(format!("gen: {e}")))?;
    let made: Vec<Vec<PuzzleRecord>> = (0..g.count as u64)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i);
            let p = generate_puzzle(&GeneratorConfig { seed: s, ..base.clone() })?;
            let mut out = Vec::with_capacity(1 + g.variants);
            for k in 0..g.variants {
                let (mut q, _) = random_renaming(&p, &g.name_pool, &g.color_pool, stage_seed(s, &format!("variant:{k}")))?;
                q.id = format!("{}-v{k}", p.id);
                q.verify()?;
                out.push(PuzzleRecord { schema_version: SCHEMA_VERSION, puzzle: q, variant_of: Some(p.id.clone()) });
            }
            out.insert(0, PuzzleRecord { schema_version: SCHEMA_VERSION, puzzle: p, variant_of: None });
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<PuzzleRecord> = made.into_iter().flatten().collect();
    records.sort_by(|a, b| a.puzzle.id.cmp(&b.puzzle.id));
    if let Some(w) = records.windows(2).find(|w| w[0].puzzle.id == w[1].puzzle.id) {
        return Err(CliError::Stage(format!("duplicate puzzle id {}", w[0].puzzle.id)));
    }
    let clues: usize = records.iter().map(|r| r.puzzle.clues.len()).sum();
    run.output_jsonl(PUZZLES, &records)?;
    Ok(json!({
        "puzzles": records.len(),
        "base_puzzles": g.count,
        "variants_per_puzzle": g.variants,
        "mean_clues": clues as f64 / records.len() as f64,
        "oracle_verified": records.len(),
    }))
}

// ---------------------------------------------------------------- solve

fn solve(run: &mut Run<'_>) -> Result<serde_json::Value> {
    let puzzles: Vec<PuzzleRecord> = run.input_jsonl(PUZZLES)?;
    let mut traces: Vec<TraceRecord> = puzzles
        .par_iter()
        .map(|r| {
            let trace = solve_with_trace(&r.puzzle)?;
            if trace.final_arrangement != r.puzzle.solution {
                return Err(CliError::Stage(format!("{}: solver final differs from the recorded solution", r.puzzle.id)));
            }
            Ok(TraceRecord { schema_version: SCHEMA_VERSION, trace })
        })
        .collect::<Result<_>>()?;
    traces.sort_by(|a, b| a.trace.puzzle_id.cmp(&b.trace.puzzle_id));
    let steps: usize = traces.iter().map(|t| t.trace.steps.len()).sum();
    run.output_jsonl(TRACES, &traces)?;
    Ok(json!({ "traces": traces.len(), "steps": steps }))
}

// ---------------------------------------------------------------- synth

fn synth(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let s = &run.cfg().synth;
    let spec = SyntheticSpec { seed, hidden_dim: s.hidden_dim, layers: s.layers.clone(), token_context: s.token_context };
    spec.validate().map_err(|e| CliError::Schema(format!("synth: {e}")))?;
    let puzzles = by_id(run.input_jsonl::<PuzzleRecord>(PUZZLES)?);
    let traces: Vec<TraceRecord> = run.input_jsonl(TRACES)?;

    let made: Vec<(Sidecar, Vec<u8>, usize)> = traces
        .par_iter()
        .map(|t| {
            let id = &t.trace.puzzle_id;
            let p = puzzles.get(id).ok_or_else(|| CliError::Stage(format!("trace for unknown puzzle {id}")))?;
            let (trace, changed) = perturb_trace(&t.trace, &p.puzzle, s.perturb_rate, stage_seed(seed, &format!("perturb:{id}")))?;
            let text = trace.render_text();
            let spans = tokenize(&text);
            let labels = StatementParser::new(&p.puzzle.universe()).label(&text, &p.puzzle.solution, Some(&spans))?;
            let acts = synthesize_activations(&spec, &trace, &text, &spans, &labels.statements)?;
            let sidecar = Sidecar {
                schema_version: SIDECAR_SCHEMA_VERSION,
                puzzle_id: id.clone(),
                activation_file: activation_path(id),
                text,
                token_spans: spans,
                n_layers: spec.n_layers(),
                hidden_dim: spec.hidden_dim,
                layers: (0..spec.n_layers()).collect(),
                capture_point: "synthetic".into(),
                tokenizer: "reference".into(),
                metadata: [("perturbed_steps".to_string(), changed.to_string())].into(),
            };
            Ok((sidecar, acts.to_bytes()?, changed))
        })
        .collect::<Result<_>>()?;

    run.clear(ACTIVATIONS_DIR, "apzact")?;
    let mut sidecars = Vec::with_capacity(made.len());
    let (mut tokens, mut perturbed) = (0, 0);
    for (sidecar, bytes, changed) in made {
        run.output(&sidecar.activation_file, &bytes)?;
        tokens += sidecar.token_spans.len();
        perturbed += changed;
        sidecars.push(sidecar);
    }
    run.output_jsonl(SIDECARS, &sidecars)?;
    Ok(json!({
        "puzzles": sidecars.len(),
        "tokens": tokens,
        "perturbed_steps": perturbed,
        "n_layers": spec.n_layers(),
        "hidden_dim": spec.hidden_dim,
    }))
}

// ---------------------------------------------------------------- extract

fn extract(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let e = &run.cfg().extract;
    let Some((program, args)) = e.command.split_first() else {
        return Err(CliError::Schema("extract.command is empty; point it at the activation extractor".into()));
    };
    let puzzles = by_id(run.input_jsonl::<PuzzleRecord>(PUZZLES)?);
    run.input(TRACES)?;
    let absolute = |rel: &str| {
        let p = run.path(rel);
        std::path::absolute(&p).unwrap_or(p).display().to_string()
    };
    let (puzzles_path, traces_path, out_dir) = (absolute(PUZZLES), absolute(TRACES), absolute(""));
    let fill = |a: &String| {
        a.replace("{puzzles}", &puzzles_path)
            .replace("{traces}", &traces_path)
            .replace("{out_dir}", &out_dir)
            .replace("{seed}", &seed.to_string())
    };
    let status = Command::new(fill(program))
        .args(args.iter().map(fill))
        .status()
        .map_err(|err| CliError::Stage(format!("cannot start {program}: {err}")))?;
    if !status.success() {
        return Err(CliError::Stage(format!("{program} exited with {status}")));
    }

    // The extractor wrote straight into the run directory; nothing it
    // produced is trusted until it reads back cleanly.
    let bytes = read_bytes(&run.path(SIDECARS))?;
    let sidecars: Vec<Sidecar> = parse_jsonl(&bytes, SIDECARS)?;
    let mut seen = BTreeSet::new();
    let mut files = Vec::with_capacity(sidecars.len());
    for sc in &sidecars {
        if !puzzles.contains_key(&sc.puzzle_id) {
            return Err(CliError::Stage(format!("sidecar for unknown puzzle {}", sc.puzzle_id)));
        }
        if !seen.insert(sc.puzzle_id.clone()) {
            return Err(CliError::Stage(format!("two sidecars for {}", sc.puzzle_id)));
        }
        let file = read_bytes(&run.path(&sc.activation_file))?;
        let acts = Activations::from_bytes(&file).map_err(|err| CliError::Stage(format!("{}: {err}", sc.activation_file)))?;
        sc.check(&acts).map_err(|err| CliError::Stage(format!("{}: {err}", sc.puzzle_id)))?;
        files.push(FileEntry::of_bytes(&sc.activation_file, &file));
    }
    let missing: Vec<&String> = puzzles.keys().filter(|id| !seen.contains(*id)).collect();
    if sidecars.is_empty() || (e.require_all && !missing.is_empty()) {
        return Err(CliError::Stage(format!("extractor produced {} of {} puzzles", sidecars.len(), puzzles.len())));
    }
    run.outputs.extend(files);
    run.outputs.push(FileEntry::of_bytes(SIDECARS, &bytes));
    let errors_file = run.path("extract_errors.jsonl");
    let errors = std::fs::read_to_string(&errors_file).map(|t| t.lines().filter(|l| !l.trim().is_empty()).count()).unwrap_or(0);
    Ok(json!({
        "command": e.command.iter().map(fill).collect::<Vec<_>>(),
        "puzzles": sidecars.len(),
        "missing": missing,
        "reported_errors": errors,
        "capture_points": sidecars.iter().map(|s| s.capture_point.as_str()).collect::<BTreeSet<_>>(),
    }))
}

// ---------------------------------------------------------------- label

fn label(run: &mut Run<'_>) -> Result<serde_json::Value> {
    let puzzles = by_id(run.input_jsonl::<PuzzleRecord>(PUZZLES)?);
    let mut sidecars: Vec<Sidecar> = run.input_jsonl(SIDECARS)?;
    sidecars.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    let reports: Vec<_> = sidecars
        .par_iter()
        .map(|sc| {
            let p = puzzles
                .get(&sc.puzzle_id)
                .ok_or_else(|| CliError::Stage(format!("sidecar for unknown puzzle {}", sc.puzzle_id)))?;
            let rep = StatementParser::new(&p.puzzle.universe()).label(&sc.text, &p.puzzle.solution, Some(&sc.token_spans))?;
            Ok((sc.puzzle_id.clone(), rep))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let (mut sentences, mut unmatched, mut unknown) = (0, 0, 0);
    for (id, rep) in reports {
        sentences += rep.sentences;
        unmatched += rep.unmatched_sentences;
        unknown += rep.unknown_vocabulary;
        records.extend(rep.statements.into_iter().enumerate().map(|(i, statement)| LabelRecord {
            schema_version: SCHEMA_VERSION,
            puzzle_id: id.clone(),
            statement_index: i,
            statement,
        }));
    }
    let rate = if sentences == 0 { 0.0 } else { unmatched as f64 / sentences as f64 };
    if let Some(max) = run.cfg().label.max_unmatched_rate {
        if rate > max {
            return Err(CliError::Stage(format!("unmatched sentence rate {rate:.4} exceeds {max}")));
        }
    }
    let correct = records.iter().filter(|r| r.statement.label == Label::Correct).count();
    run.output_jsonl(LABELS, &records)?;
    Ok(json!({
        "puzzles": sidecars.len(),
        "statements": records.len(),
        "correct": correct,
        "incorrect": records.len() - correct,
        "sentences": sentences,
        "unmatched_sentences": unmatched,
        "unmatched_rate": rate,
        "unknown_vocabulary": unknown,
    }))
}

// ---------------------------------------------------------------- split

pub fn key_digest(key: &IsomorphismKey) -> String {
    sha256_hex(key.0.as_bytes())
}

fn split(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let mut puzzles: Vec<PuzzleRecord> = run.input_jsonl(PUZZLES)?;
    puzzles.sort_by(|a, b| a.puzzle.id.cmp(&b.puzzle.id));
    let keyed: Vec<(String, IsomorphismKey)> = puzzles
        .par_iter()
        .map(|r| Ok((r.puzzle.id.clone(), canonical_key(&r.puzzle)?)))
        .collect::<Result<_>>()?;
    let assignment = split_by_keys(&keyed, run.cfg().split.fractions, seed)?;
    let records: Vec<SplitLine> = assignment
        .records
        .iter()
        .map(|r| SplitLine { schema_version: SCHEMA_VERSION, id: r.id.clone(), key_digest: key_digest(&r.key), split: r.split })
        .collect();
    let classes: BTreeSet<&IsomorphismKey> = keyed.iter().map(|(_, k)| k).collect();
    run.output_jsonl(SPLIT, &records)?;
    let [tr, va, te] = assignment.counts;
    Ok(json!({
        "puzzles": records.len(),
        "classes": classes.len(),
        "counts": { "train": tr, "validation": va, "test": te },
    }))
}

// ---------------------------------------------------------------- shared corpus loading

struct Corpus {
    sidecars: Vec<Sidecar>,
    tensors: HashMap<String, Activations>,
    n_layers: usize,
    hidden_dim: usize,
}

fn load_corpus(run: &mut Run<'_>) -> Result<Corpus> {
    let mut sidecars: Vec<Sidecar> = run.input_jsonl(SIDECARS)?;
    sidecars.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    let Some(first) = sidecars.first() else {
        return Err(CliError::Stage(format!("{SIDECARS} is empty")));
    };
    let (n_layers, hidden_dim) = (first.n_layers, first.hidden_dim);
    let mut tensors = HashMap::with_capacity(sidecars.len());
    for sc in &sidecars {
        let bytes = run.input(&sc.activation_file)?;
        let a = Activations::from_bytes(&bytes).map_err(|e| CliError::Stage(format!("{}: {e}", sc.activation_file)))?;
        sc.check(&a).map_err(|e| CliError::Stage(format!("{}: {e}", sc.puzzle_id)))?;
        if (a.n_layers, a.hidden_dim) != (n_layers, hidden_dim) {
            return Err(CliError::Stage(format!("{}: activation shape differs from the rest of the corpus", sc.puzzle_id)));
        }
        tensors.insert(sc.puzzle_id.clone(), a);
    }
    Ok(Corpus { sidecars, tensors, n_layers, hidden_dim })
}

fn labels_by_puzzle(records: Vec<LabelRecord>) -> BTreeMap<String, Vec<LabeledStatement>> {
    let mut out: BTreeMap<String, Vec<(usize, LabeledStatement)>> = BTreeMap::new();
    for r in records {
        out.entry(r.puzzle_id).or_default().push((r.statement_index, r.statement));
    }
    out.into_iter()
        .map(|(id, mut v)| {
            v.sort_by_key(|(i, _)| *i);
            (id, v.into_iter().map(|(_, s)| s).collect())
        })
        .collect()
}

/// Probe examples for every split, in puzzle-id order.
struct SplitExamples {
    per_split: BTreeMap<Split, Vec<ProbeExample>>,
    skipped_short: usize,
    skipped_invalid: usize,
}

fn examples_by_split(
    corpus: &Corpus,
    labels: &BTreeMap<String, Vec<LabeledStatement>>,
    splits: &HashMap<String, Split>,
    layers: &[usize],
) -> Result<SplitExamples> {
    let mut out = SplitExamples { per_split: BTreeMap::new(), skipped_short: 0, skipped_invalid: 0 };
    for sc in &corpus.sidecars {
        let (Some(statements), Some(split)) = (labels.get(&sc.puzzle_id), splits.get(&sc.puzzle_id)) else {
            continue;
        };
        let src = [ExampleSource { puzzle_id: &sc.puzzle_id, activations: &corpus.tensors[&sc.puzzle_id], statements }];
        let rep = build_examples(&src, layers)?;
        out.skipped_short += rep.skipped_short;
        out.skipped_invalid += rep.skipped_invalid;
        out.per_split.entry(*split).or_default().extend(rep.examples);
    }
    Ok(out)
}

fn read_splits(run: &mut Run<'_>) -> Result<HashMap<String, Split>> {
    Ok(run.input_jsonl::<SplitLine>(SPLIT)?.into_iter().map(|r| (r.id, r.split)).collect())
}

// ---------------------------------------------------------------- train

fn train_stage(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let t = run.cfg().train.clone();
    let labels = labels_by_puzzle(run.input_jsonl(LABELS)?);
    let splits = read_splits(run)?;
    let corpus = load_corpus(run)?;
    let layer_sets: Vec<Vec<usize>> =
        if t.layer_sets.is_empty() { (0..corpus.n_layers).map(|l| vec![l]).collect() } else { t.layer_sets.clone() };
    if let Some(bad) = layer_sets.iter().flatten().find(|&&l| l >= corpus.n_layers) {
        return Err(CliError::Schema(format!("train.layer_sets names layer {bad}; the corpus has {}", corpus.n_layers)));
    }

    let trained: Vec<_> = layer_sets
        .par_iter()
        .map(|layers| {
            let name = model_name(layers);
            let ex = examples_by_split(&corpus, &labels, &splits, layers)?;
            let empty = Vec::new();
            let tr = ex.per_split.get(&Split::Train).unwrap_or(&empty);
            let va = ex.per_split.get(&Split::Validation).unwrap_or(&empty);
            let cfg = TrainConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                learning_rate: t.learning_rate,
                seed: stage_seed(seed, &name),
                layers: layers.clone(),
                conv_channels: t.conv_channels,
                hidden: t.hidden,
                standardize: t.standardize,
            };
            let out = train(tr, va, &cfg).map_err(|e| CliError::Stage(format!("{name}: {e}")))?;
            let meta = CheckpointMeta {
                layers: layers.clone(),
                hidden_dim: corpus.hidden_dim,
                train: Some(cfg),
                best_epoch: Some(out.best_epoch),
            };
            let mut bytes = Vec::new();
            out.model.save(&meta, &mut bytes)?;
            let summary = json!({
                "model": name,
                "layers": layers,
                "train_examples": tr.len(),
                "validation_examples": va.len(),
                "skipped_short": ex.skipped_short,
                "skipped_invalid": ex.skipped_invalid,
                "best_epoch": out.best_epoch,
                "best_validation_accuracy": out.history[out.best_epoch].validation_accuracy,
            });
            Ok((name, layers.clone(), bytes, out, summary))
        })
        .collect::<Result<_>>()?;

    run.clear(MODELS_DIR, "apzprb")?;
    let mut history = Vec::new();
    let mut summaries = Vec::new();
    for (name, layers, bytes, out, summary) in trained {
        run.output(&format!("{MODELS_DIR}/{name}.apzprb"), &bytes)?;
        history.extend(out.history.iter().map(|h| HistoryRecord {
            schema_version: SCHEMA_VERSION,
            model: name.clone(),
            layers: layers.clone(),
            epoch: h.epoch,
            train_loss: h.train_loss,
            validation_accuracy: h.validation_accuracy,
            selected: h.epoch == out.best_epoch,
        }));
        summaries.push(summary);
    }
    run.output_jsonl(TRAIN_HISTORY, &history)?;
    Ok(json!({ "models": summaries }))
}

// ---------------------------------------------------------------- eval

fn eval(run: &mut Run<'_>) -> Result<serde_json::Value> {
    let models: Vec<String> = run
        .manifest
        .last(Stage::Train.name())
        .ok_or_else(|| CliError::MissingInput(run.path(MODELS_DIR)))?
        .outputs
        .iter()
        .filter(|f| f.path.starts_with(MODELS_DIR))
        .map(|f| f.path.clone())
        .collect();
    let labels = labels_by_puzzle(run.input_jsonl(LABELS)?);
    let splits = read_splits(run)?;
    let corpus = load_corpus(run)?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for rel in &models {
        let bytes = run.input(rel)?;
        let (model, meta) = ProbeModel::load(&bytes[..]).map_err(|e| CliError::Stage(format!("{rel}: {e}")))?;
        let ex = examples_by_split(&corpus, &labels, &splits, &meta.layers)?;
        for &split in &run.cfg().eval.splits {
            match ex.per_split.get(&split).filter(|v| !v.is_empty()) {
                Some(examples) => records.push(EvalRecord {
                    schema_version: SCHEMA_VERSION,
                    model: model_name(&meta.layers),
                    layers: meta.layers.clone(),
                    split,
                    metrics: evaluate(&model, examples)?,
                }),
                None => skipped.push(format!("{}:{}", model_name(&meta.layers), split.as_str())),
            }
        }
    }
    run.output_jsonl(EVAL, &records)?;
    let accuracy: BTreeMap<String, f64> =
        records.iter().map(|r| (format!("{}:{}", r.model, r.split.as_str()), r.metrics.accuracy)).collect();
    Ok(json!({ "accuracy": accuracy, "empty_splits": skipped }))
}

// ---------------------------------------------------------------- abstraction

fn sample_summary(s: &std::result::Result<Sample, ProbeError>) -> serde_json::Value {
    match s {
        Ok(s) => json!({
            "eligible": s.eligible,
            "sampled": s.pairs.len(),
            "shortfall": s.shortfall,
            "excluded_token_mismatch": s.excluded_token_mismatch,
            "unlocated_lines": s.unlocated_lines,
        }),
        Err(e) => json!({ "eligible": 0, "error": e.to_string() }),
    }
}

fn abstraction(run: &mut Run<'_>, seed: u64) -> Result<serde_json::Value> {
    let a = run.cfg().abstraction.clone();
    let puzzles = by_id(run.input_jsonl::<PuzzleRecord>(PUZZLES)?);
    let traces: HashMap<String, ReasoningTrace> =
        run.input_jsonl::<TraceRecord>(TRACES)?.into_iter().map(|t| (t.trace.puzzle_id.clone(), t.trace)).collect();
    let corpus = load_corpus(run)?;
    let layers: Vec<usize> = if a.layers.is_empty() { (0..corpus.n_layers).collect() } else { a.layers.clone() };
    if let Some(bad) = layers.iter().find(|&&l| l >= corpus.n_layers) {
        return Err(CliError::Schema(format!("abstraction.layers names layer {bad}; the corpus has {}", corpus.n_layers)));
    }

    let entries: Vec<CorpusEntry> = corpus
        .sidecars
        .par_iter()
        .map(|sc| {
            let id = &sc.puzzle_id;
            let (Some(p), Some(trace)) = (puzzles.get(id), traces.get(id)) else {
                return Err(CliError::Stage(format!("{id}: no puzzle or trace for this sidecar")));
            };
            Ok(CorpusEntry {
                puzzle_id: id.clone(),
                key: canonical_key(&p.puzzle)?,
                trace: trace.clone(),
                text: sc.text.clone(),
                token_spans: sc.token_spans.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let samples: Vec<(Condition, std::result::Result<Sample, ProbeError>)> = [Condition::Identical, Condition::Isomorphic]
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, sample_line_pairs(&entries, c, a.pairs, derive_seed(seed, i as u64))))
        .collect();
    if samples.iter().all(|(_, s)| s.is_err()) {
        return Err(CliError::Stage("no eligible line pairs under either condition".into()));
    }
    let pairs: Vec<_> = samples.iter().filter_map(|(_, s)| s.as_ref().ok()).flat_map(|s| s.pairs.iter().cloned()).collect();
    let violations = audit_pairs(&pairs, &entries);
    if !violations.is_empty() {
        return Err(CliError::Stage(format!("sampled pairs fail their definition: {}", violations.join("; "))));
    }
    let profile = layer_profile(&pairs, &corpus.tensors, &layers);
    let mut records = Vec::new();
    for row in &profile.rows {
        for (condition, stat) in [(Condition::Identical, &row.identical), (Condition::Isomorphic, &row.isomorphic)] {
            records.push(AbstractionRecord {
                schema_version: SCHEMA_VERSION,
                layer: row.layer,
                condition,
                mean: stat.mean,
                pairs: stat.pairs,
            });
        }
    }
    let pair_records: Vec<PairRecord> = pairs
        .iter()
        .map(|p| PairRecord { schema_version: SCHEMA_VERSION, condition: p.condition, left: p.left.clone(), right: p.right.clone() })
        .collect();
    run.output_jsonl(ABSTRACTION, &records)?;
    run.output_jsonl(ABSTRACTION_PAIRS, &pair_records)?;
    let by_condition: BTreeMap<&str, serde_json::Value> =
        samples.iter().map(|(c, s)| (c.as_str(), sample_summary(s))).collect();
    Ok(json!({
        "conditions": by_condition,
        "layers": layers,
        "dropped_pairs": profile.dropped_pairs,
        "zero_variance_tokens": profile.zero_variance,
    }))
}

fn by_id(records: Vec<PuzzleRecord>) -> BTreeMap<String, PuzzleRecord> {
    records.into_iter().map(|r| (r.puzzle.id.clone(), r)).collect()
}

/// Reads `puzzles.jsonl` from a run directory without any digest check.
pub fn read_puzzles(dir: &Path) -> Result<Vec<Puzzle>> {
    let bytes = read_bytes(&dir.join(PUZZLES))?;
    Ok(parse_jsonl::<PuzzleRecord>(&bytes, PUZZLES)?.into_iter().map(|r| r.puzzle).collect())
}
