//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs as a plain binary (`harness = false`) so the summary is
//! printed even when everything passes:
//!
//! ```text
//! cargo test --release -p apz-cli --test acceptance
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use apz_cli::config::ValidateConfig;
use apz_cli::records::{AbstractionRecord, EvalRecord, LabelRecord, ABSTRACTION, EVAL, LABELS};
use apz_cli::validate::Status;
use apz_cli::{io::read_jsonl, run_pipeline, validate_corpus, Context, RunConfig, Stage};
use apz_core::fixtures::{aaron_blake, andrew_bella, ava_blake};
use apz_core::generator::{generate_puzzle, GeneratorConfig};
use apz_core::isomorphism::{canonical_key, random_renaming, split_dataset, Split};
use apz_core::parser::{label_trace, parse_statements, Label};
use apz_core::rng::{derive_seed, rng};
use apz_core::text::{claim_bearing_details, render_final_answer, render_step};
use apz_core::{clue_satisfied, solve_with_trace, Arrangement, Claim, Puzzle, Universe};
use apz_probe::abstraction::{pearson, Condition};
use apz_probe::classifier::{forward, gradient_check, train, Architecture, ProbeExample, ProbeModel, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("generator guarantee", generator_guarantee),
        ("solver soundness", solver_soundness),
        ("parser round-trip", parser_round_trip),
        ("isomorphism", isomorphism),
        ("classifier numerics", classifier_numerics),
        ("planted-signal recovery", planted_signal),
        ("abstraction profile recovery", abstraction_profile),
        ("pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<30} {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {why} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

// ------------------------------------------------------------ generator

fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Brute force over all n!² arrangements, optionally ignoring one clue.
fn naive_solutions(p: &Puzzle, skip: Option<usize>) -> Vec<Arrangement> {
    let u = p.universe();
    let mut out = Vec::new();
    for people in permutations(&p.names) {
        for colors in permutations(&p.colors) {
            let arr = Arrangement { person_at: people.clone(), color_at: colors };
            let holds = p
                .clues
                .iter()
                .enumerate()
                .filter(|&(i, _)| Some(i) != skip)
                .all(|(_, c)| clue_satisfied(c, &arr, &u).unwrap());
            if holds {
                out.push(arr);
            }
        }
    }
    out
}

fn corpus() -> Vec<Puzzle> {
    [2usize, 3]
        .into_iter()
        .flat_map(|n| (0..1000u64).map(move |seed| generate_puzzle(&GeneratorConfig::new(n, seed)).unwrap()))
        .collect()
}

fn generator_guarantee() -> Outcome {
    let t0 = Instant::now();
    let puzzles = corpus();
    let mut removals = 0;
    for p in &puzzles {
        let sols = naive_solutions(p, None);
        ensure!(sols == [p.solution.clone()], "{}: {} solutions", p.id, sols.len());
        for skip in 0..p.clues.len() {
            let k = naive_solutions(p, Some(skip)).len();
            ensure!(k >= 2, "{}: dropping clue {skip} leaves {k} solution(s)", p.id);
            removals += 1;
        }
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} puzzles unique, {removals} single-clue removals all ambiguous", puzzles.len()))
}

fn solver_soundness() -> Outcome {
    let (mut statements, mut puzzles) = (0, 0);
    for p in corpus() {
        let witness = naive_solutions(&p, None).remove(0);
        let trace = solve_with_trace(&p).map_err(|e| format!("{}: {e}", p.id))?;
        ensure!(trace.final_arrangement == witness, "{}: solver and oracle disagree", p.id);
        let report = label_trace(&trace.render_text(), &witness, &p.universe()).map_err(|e| e.to_string())?;
        ensure!(!report.statements.is_empty(), "{}: no statements", p.id);
        if let Some(bad) = report.statements.iter().find(|s| s.label != Label::Correct) {
            return Err(format!("{}: {:?} labeled {:?}", p.id, bad.span.claim, bad.label));
        }
        statements += report.statements.len();
        puzzles += 1;
    }
    Ok(format!("{puzzles} traces, {statements} statements all Correct"))
}

// --------------------------------------------------------------- parser

fn parser_round_trip() -> Outcome {
    let names = ["Ava", "Blake", "Chloe", "Daniel"];
    let colors = ["red", "pink", "mint", "chocolate"];
    let (mut sentences, mut failures) = (0usize, Vec::new());
    let mut check = |text: String, want: Claim, u: &Universe| {
        sentences += 1;
        let got: Vec<Claim> = parse_statements(&text, u).into_iter().map(|s| s.claim).collect();
        if got != [want] {
            failures.push(text);
        }
    };
    for n in 2..=4 {
        let u = Universe::new(
            names[..n].iter().map(|s| s.to_string()).collect(),
            colors[..n].iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        for d in claim_bearing_details(&u) {
            let want = d.claim().expect("claim-bearing");
            check(render_step(&d, n), want, &u);
        }
        for k in 0..n {
            let arrangement = Arrangement {
                person_at: (0..n).map(|i| u.names[(i + k) % n].clone()).collect(),
                color_at: (0..n).map(|i| u.colors[(i + 2 * k + 1) % n].clone()).collect(),
            };
            check(render_final_answer(&arrangement), Claim::FinalAnswer { arrangement }, &u);
        }
    }
    ensure!(sentences >= 5000, "only {sentences} sentences");
    ensure!(failures.is_empty(), "{} of {sentences} failed, first {:?}", failures.len(), failures[0]);
    Ok(format!("{sentences} sentences, 0 failures"))
}

// ---------------------------------------------------------- isomorphism

fn isomorphism() -> Outcome {
    let pool = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let names = pool(&["Xena", "Yusuf", "Zoe", "Wren", "Vera", "Uma", "Theo", "Sana"]);
    let colors = pool(&["amber", "bronze", "cyan", "denim", "ebony", "fawn", "gold", "hazel"]);
    for trial in 0..1000u64 {
        let p = generate_puzzle(&GeneratorConfig::new(2 + (trial % 3) as usize, derive_seed(41, trial))).unwrap();
        let (mut q, _) = random_renaming(&p, &names, &colors, trial).map_err(|e| e.to_string())?;
        let mut r = rng(trial ^ 0x5eed);
        q.clues.shuffle(&mut r);
        q.names.shuffle(&mut r);
        q.colors.shuffle(&mut r);
        ensure!(canonical_key(&p).unwrap() == canonical_key(&q).unwrap(), "trial {trial}: key changed");
    }

    let key = |p: Puzzle| canonical_key(&p).unwrap();
    ensure!(key(ava_blake()) == key(andrew_bella()), "renamed worked example has a different key");
    ensure!(key(ava_blake()) != key(aaron_blake()), "logically different worked example shares a key");

    let puzzles: Vec<Puzzle> = (0..600u64).map(|s| generate_puzzle(&GeneratorConfig::new(3, 9000 + s)).unwrap()).collect();
    let fractions = [0.8, 0.1, 0.1];
    let split = split_dataset(&puzzles, fractions, 17).map_err(|e| e.to_string())?;
    let mut owner = BTreeMap::new();
    for r in &split.records {
        let first = *owner.entry(r.key.clone()).or_insert(r.split);
        ensure!(first == r.split, "class of {} spans {first:?} and {:?}", r.id, r.split);
    }
    for (i, f) in fractions.iter().enumerate() {
        let off = split.counts[i] as f64 - f * puzzles.len() as f64;
        ensure!(off.abs() <= 2.0, "{:?} is {off:+} off target: {:?}", Split::ALL[i], split.counts);
    }
    Ok(format!("1000 metamorphic trials; worked examples; 600-puzzle split {:?} over {} classes", split.counts, owner.len()))
}

// ----------------------------------------------------------- classifier

fn example(channels: usize, features: Vec<f32>) -> ProbeExample {
    ProbeExample { puzzle_id: "p".into(), statement_index: 0, label: Label::Correct, channels, features }
}

fn classifier_numerics() -> Outcome {
    // Forward oracle, evaluated by hand: conv 1.85/3.1/4.35, then 0.865, 0.73, 0.895.
    let arch = Architecture { in_channels: 1, conv_channels: 1, kernel: 3, hidden: [1, 1] };
    let mut m = ProbeModel::zeros(arch).unwrap();
    m.params = vec![0.5, 1.0, -0.25, 0.1, 0.2, -0.1, 0.3, -0.5, 2.0, -1.0, 1.5, -0.2];
    let p = forward(&m, &example(1, vec![1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
    let want = 0.7099209183344533;
    let forward_err = (p - want).abs() / want;
    ensure!(forward_err <= 1e-6, "forward {p} vs {want}");

    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for trial in 0..24u64 {
        let ci = r.random_range(1..=4);
        let arch = Architecture {
            in_channels: ci,
            conv_channels: r.random_range(1..=5),
            kernel: 3,
            hidden: [r.random_range(1..=6), r.random_range(1..=4)],
        };
        let model = ProbeModel::init(arch, 100 + trial).unwrap();
        let features = (0..5 * ci).map(|_| r.random_range(-2.0f32..2.0)).collect();
        worst = worst.max(gradient_check(&model, &example(ci, features), 1e-5).unwrap());
    }
    ensure!(worst <= 1e-4, "worst relative gradient error {worst:e}");

    let mut r = rng(5);
    let data: Vec<ProbeExample> = (0..120)
        .map(|i| {
            let mut e = example(3, (0..15).map(|_| r.random_range(-1.0f32..1.0)).collect());
            e.label = if i % 2 == 0 { Label::Correct } else { Label::Incorrect };
            e.statement_index = i;
            e
        })
        .collect();
    let cfg = TrainConfig { epochs: 2, seed: 4, conv_channels: 8, hidden: [8, 4], ..Default::default() };
    let a = train(&data[..100], &data[100..], &cfg).unwrap();
    let b = train(&data[..100], &data[100..], &cfg).unwrap();
    ensure!(a.model.params == b.model.params, "same-seed training diverged");
    Ok(format!("forward rel err {forward_err:.1e}; worst gradient rel err {worst:.1e} over 24 models; same-seed weights identical"))
}

// ------------------------------------------------------- CLI end to end

fn run(dir: &Path, seed: u64, toml: &str, stages: &[Stage]) -> Result<(), String> {
    let config = RunConfig::parse(toml)?;
    run_pipeline(&Context::new(dir, seed, config), stages).map(|_| ()).map_err(|e| e.to_string())
}

fn planted_signal() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let toml = r#"
        [gen]
        n = 3
        count = 110
        [split]
        fractions = [0.7, 0.15, 0.15]
        [train]
        epochs = 10
        [eval]
        splits = ["test"]
    "#;
    use Stage::*;
    run(tmp.path(), 2025, toml, &[Gen, Solve, Synth, Label, Split, Train, Eval])?;

    let labels: Vec<LabelRecord> = read_jsonl(&tmp.path().join(LABELS)).map_err(|e| e.to_string())?;
    ensure!(labels.len() >= 2000, "only {} statements", labels.len());
    let report = validate_corpus(tmp.path(), &ValidateConfig::default(), 0);
    let split = report.check("split_disjointness").unwrap();
    ensure!(split.status == Status::Pass, "split check: {:?}", split.failures);

    let evals: Vec<EvalRecord> = read_jsonl(&tmp.path().join(EVAL)).map_err(|e| e.to_string())?;
    let mut accs = Vec::new();
    for e in &evals {
        let layer = e.layers[0];
        let acc = e.metrics.accuracy;
        accs.push(format!("{layer}:{acc:.2}"));
        if (4..=6).contains(&layer) {
            ensure!(acc >= 0.95, "planted layer {layer} reached only {acc:.3}");
        } else {
            ensure!(acc <= 0.65, "unplanted layer {layer} reached {acc:.3}");
        }
    }
    ensure!(evals.len() == 8, "{} layers evaluated", evals.len());
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("{} statements; test accuracy {}", labels.len(), accs.join(" ")))
}

fn abstraction_profile() -> Outcome {
    for (u, v, want) in [
        (vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0], 1.0),
        (vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, -2.0, -3.0, -4.0], -1.0),
        (vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 1.0, 4.0, 3.0], 0.6),
    ] {
        let got = pearson(&u, &v).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 1e-12, "pearson {u:?} {v:?} = {got}, want {want}");
    }

    let tmp = tempfile::tempdir().unwrap();
    let toml = r#"
        [gen]
        count = 40
        variants = 1
        [synth]
        perturb_rate = 0.0
        layers = [
            { token = 1.0, role = 0.0, correctness = 0.0, noise = 0.2 },
            { token = 0.0, role = 1.0, correctness = 0.0, noise = 0.2 },
        ]
    "#;
    use Stage::*;
    run(tmp.path(), 11, toml, &[Gen, Solve, Synth, Abstraction])?;
    let rows: Vec<AbstractionRecord> = read_jsonl(&tmp.path().join(ABSTRACTION)).map_err(|e| e.to_string())?;
    let mean = |layer: usize, c: Condition| {
        rows.iter().find(|r| r.layer == layer && r.condition == c).and_then(|r| r.mean).ok_or(format!("no {c:?} mean on layer {layer}"))
    };
    let (ti, tm) = (mean(0, Condition::Identical)?, mean(0, Condition::Isomorphic)?);
    let (ri, rm) = (mean(1, Condition::Identical)?, mean(1, Condition::Isomorphic)?);
    ensure!(ti >= 0.9 && ti - tm >= 0.3, "token layer: identical {ti:.3}, isomorphic {tm:.3}");
    ensure!(rm >= 0.9 && rm - ri >= 0.3, "role layer: identical {ri:.3}, isomorphic {rm:.3}");
    Ok(format!(
        "pearson unit cases exact; token layer {ti:.3}/{tm:.3}, role layer {ri:.3}/{rm:.3} (identical/isomorphic)"
    ))
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn tampered(run: &BTreeMap<String, Vec<u8>>, dir: &Path, rel: &str, mut edit: impl FnMut(&mut Vec<u8>)) {
    for (path, bytes) in run {
        let dest = dir.join(path);
        fs::create_dir_all(dest.parent().unwrap()).unwrap();
        let mut bytes = bytes.clone();
        if path == rel {
            edit(&mut bytes);
        }
        fs::write(dest, bytes).unwrap();
    }
}

fn pipeline_determinism() -> Outcome {
    let toml = r#"
        [gen]
        count = 24
        variants = 1
        [synth]
        hidden_dim = 16
        [train]
        layer_sets = [[5], [1]]
        epochs = 2
        conv_channels = 16
        hidden = [16, 8]
        [abstraction]
        pairs = 200
    "#;
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, 99, toml, &Stage::SYNTHETIC)?;
    run(&b, 99, toml, &Stage::SYNTHETIC)?;
    let (mut sa, mut sb) = (snapshot(&a), snapshot(&b));
    sa.remove("manifest.json");
    sb.remove("manifest.json");
    ensure!(sa.keys().eq(sb.keys()), "runs wrote different file sets");
    if let Some(rel) = sa.keys().find(|k| sa[*k] != sb[*k]) {
        return Err(format!("{rel} differs between same-seed runs"));
    }

    let opts = ValidateConfig::default();
    let clean = validate_corpus(&a, &opts, 0);
    ensure!(clean.passed() && clean.checks.iter().all(|c| c.status == Status::Pass), "clean run:\n{clean}");
    let full = snapshot(&a);

    // Fault 1: one puzzle moved to another split; its renamed copy stays.
    let split_text = String::from_utf8(full["split.jsonl"].clone()).unwrap();
    let first: serde_json::Value = serde_json::from_str(split_text.lines().next().unwrap()).unwrap();
    let id = first["id"].as_str().unwrap().to_string();
    let to = if first["split"] == "test" { "train" } else { "test" };
    let moved = tmp.path().join("moved");
    tampered(&full, &moved, "split.jsonl", |bytes| {
        let line = split_text.lines().next().unwrap();
        let new = line.replace(&format!("\"split\":{}", first["split"]), &format!("\"split\":\"{to}\""));
        *bytes = split_text.replacen(line, &new, 1).into_bytes();
    });
    let report = validate_corpus(&moved, &opts, 0);
    let c = report.check("split_disjointness").unwrap();
    ensure!(c.status == Status::Fail && c.failures.iter().any(|f| f.contains(&id)), "moved {id} not caught:\n{report}");

    // Fault 2: one activation payload byte flipped.
    let act = full.keys().find(|k| k.ends_with(".apzact")).unwrap().clone();
    let corrupt = tmp.path().join("corrupt");
    tampered(&full, &corrupt, &act, |bytes| {
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
    });
    let report = validate_corpus(&corrupt, &opts, 0);
    let caught = ["digests", "activation_headers"].iter().any(|n| report.check(n).unwrap().status == Status::Fail);
    ensure!(caught, "flipped byte in {act} not caught:\n{report}");

    // Fault 3: one statement label flipped.
    let relabeled = tmp.path().join("relabeled");
    tampered(&full, &relabeled, "labels.jsonl", |bytes| {
        let text = String::from_utf8(bytes.clone()).unwrap();
        *bytes = text.replacen("\"label\":\"Correct\"", "\"label\":\"Incorrect\"", 1).into_bytes();
    });
    let report = validate_corpus(&relabeled, &opts, 0);
    ensure!(report.check("labels").unwrap().status == Status::Fail, "flipped label not caught:\n{report}");

    Ok(format!("{} artifacts byte-identical; clean validate; moved puzzle, flipped byte, flipped label all caught", sa.len()))
}
