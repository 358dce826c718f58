use std::collections::HashMap;

use apz_core::generator::{generate_puzzle, GeneratorConfig, DEFAULT_COLORS, DEFAULT_NAMES};
use apz_core::isomorphism::{canonical_key, random_renaming};
use apz_core::parser::StatementParser;
use apz_core::solve_with_trace;
use apz_core::tokenize::tokenize;
use apz_probe::abstraction::{audit_pairs, layer_profile, pearson, sample_line_pairs, Condition, CorpusEntry, LinePair};
use apz_probe::store::Activations;
use apz_probe::synth::{synthesize_activations, SyntheticSpec};
use proptest::prelude::*;

fn corpus(bases: u64, noise: f64) -> (Vec<CorpusEntry>, HashMap<String, Activations>) {
    let names: Vec<String> = DEFAULT_NAMES.iter().map(|s| s.to_string()).collect();
    let colors: Vec<String> = DEFAULT_COLORS.iter().map(|s| s.to_string()).collect();
    let spec = SyntheticSpec::token_then_role(11, 64, noise);
    let mut entries = Vec::new();
    let mut tensors = HashMap::new();
    for seed in 0..bases {
        let p = generate_puzzle(&GeneratorConfig::new(3, seed)).unwrap();
        let (mut q, _) = random_renaming(&p, &names, &colors, seed + 1000).unwrap();
        q.id = format!("{}-r", p.id);
        for puzzle in [p, q] {
            let trace = solve_with_trace(&puzzle).unwrap();
            let text = trace.render_text();
            let spans = tokenize(&text);
            let labels = StatementParser::new(&puzzle.universe()).label(&text, &puzzle.solution, Some(&spans)).unwrap();
            let acts = synthesize_activations(&spec, &trace, &text, &spans, &labels.statements).unwrap();
            tensors.insert(puzzle.id.clone(), acts);
            entries.push(CorpusEntry {
                puzzle_id: puzzle.id.clone(),
                key: canonical_key(&puzzle).unwrap(),
                trace,
                text,
                token_spans: spans,
            });
        }
    }
    (entries, tensors)
}

#[test]
fn token_and_role_layers_separate_the_conditions() {
    let (entries, tensors) = corpus(40, 0.2);
    let mut pairs = Vec::new();
    for condition in [Condition::Identical, Condition::Isomorphic] {
        let s = sample_line_pairs(&entries, condition, 1000, 3).unwrap();
        assert!(s.pairs.len() >= 50, "{condition:?}: {}", s.pairs.len());
        assert_eq!(s.unlocated_lines, 0);
        assert!(audit_pairs(&s.pairs, &entries).is_empty());
        pairs.extend(s.pairs);
    }
    let profile = layer_profile(&pairs, &tensors, &[0, 1]);
    assert_eq!(profile.dropped_pairs, 0);
    let (tok, role) = (&profile.rows[0], &profile.rows[1]);
    let m = |s: &apz_probe::abstraction::ConditionStat| s.mean.unwrap();
    println!(
        "token layer: identical {:.3} isomorphic {:.3}; role layer: identical {:.3} isomorphic {:.3}",
        m(&tok.identical),
        m(&tok.isomorphic),
        m(&role.identical),
        m(&role.isomorphic)
    );
    assert!(m(&tok.identical) >= 0.9);
    assert!(m(&tok.isomorphic) <= m(&tok.identical) - 0.3);
    assert!(m(&role.isomorphic) >= 0.9);
    assert!(m(&role.identical) <= m(&role.isomorphic) - 0.3);
}

#[test]
fn sampling_is_seeded() {
    let (entries, _) = corpus(12, 0.2);
    let a = sample_line_pairs(&entries, Condition::Isomorphic, 30, 5).unwrap();
    let b = sample_line_pairs(&entries, Condition::Isomorphic, 30, 5).unwrap();
    assert_eq!(a.pairs, b.pairs);
    let all = sample_line_pairs(&entries, Condition::Isomorphic, usize::MAX / 2, 5).unwrap();
    assert_eq!(all.pairs.len(), all.eligible);
    assert!(all.shortfall > 0);
}

#[test]
fn profile_ignores_pair_order_and_side() {
    let (entries, tensors) = corpus(10, 0.5);
    let mut pairs = sample_line_pairs(&entries, Condition::Isomorphic, 200, 1).unwrap().pairs;
    pairs.extend(sample_line_pairs(&entries, Condition::Identical, 200, 1).unwrap().pairs);
    let base = layer_profile(&pairs, &tensors, &[0, 1]);
    let swapped: Vec<LinePair> = pairs
        .iter()
        .rev()
        .map(|p| LinePair { condition: p.condition, left: p.right.clone(), right: p.left.clone() })
        .collect();
    let other = layer_profile(&swapped, &tensors, &[0, 1]);
    for (a, b) in base.rows.iter().zip(&other.rows) {
        for (x, y) in [(&a.identical, &b.identical), (&a.isomorphic, &b.isomorphic)] {
            assert_eq!(x.pairs, y.pairs);
            assert!((x.mean.unwrap() - y.mean.unwrap()).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn pearson_symmetry_and_affine_invariance(
        u in prop::collection::vec(-100.0f64..100.0, 3..40),
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        scale in 0.01f64..50.0,
        shift in -1e3f64..1e3,
    ) {
        let v: Vec<f64> = u.iter().zip(&noise).map(|(a, n)| 0.3 * a + 20.0 * n).collect();
        let spread = |x: &[f64]| x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread(&u) > 1e-3 && spread(&v) > 1e-3);
        let r = pearson(&u, &v).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - pearson(&v, &u).unwrap()).abs() < 1e-12);
        let w: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
        prop_assert!((r - pearson(&u, &w).unwrap()).abs() < 1e-9);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((r + pearson(&u, &neg).unwrap()).abs() < 1e-12);
    }
}
