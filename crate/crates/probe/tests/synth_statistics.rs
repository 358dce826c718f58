//! Planted components measured back out of synthesized corpora.

use apz_core::generator::{generate_puzzle, GeneratorConfig};
use apz_core::parser::{Label, StatementParser};
use apz_core::solve_with_trace;
use apz_core::tokenize::tokenize;
use apz_probe::store::Activations;
use apz_probe::synth::{correctness_direction, perturb_trace, synthesize_activations, LayerMix, SyntheticSpec, TokenContext};

const DIM: usize = 32;
const W: f64 = 0.7;
const NOISE: f64 = 0.5;

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        seed: 21,
        hidden_dim: DIM,
        layers: vec![
            LayerMix { correctness: W, noise: NOISE, ..Default::default() },
            LayerMix { token: 1.0, ..Default::default() },
        ],
        token_context: TokenContext::Isolated,
    }
}

/// (activations, per-token sign) for a perturbed corpus.
fn corpus(spec: &SyntheticSpec) -> Vec<(Activations, Vec<f64>, Vec<String>)> {
    (0..90u64)
        .map(|seed| {
            let p = generate_puzzle(&GeneratorConfig::new(3, seed)).unwrap();
            let (trace, _) = perturb_trace(&solve_with_trace(&p).unwrap(), &p, 0.5, seed).unwrap();
            let text = trace.render_text();
            let spans = tokenize(&text);
            let labels = StatementParser::new(&p.universe()).label(&text, &p.solution, Some(&spans)).unwrap();
            let a = synthesize_activations(spec, &trace, &text, &spans, &labels.statements).unwrap();
            let mut sign = vec![0.0; spans.len()];
            for st in &labels.statements {
                let (lo, hi) = st.token_range.unwrap();
                let s = if st.label == Label::Correct { 1.0 } else { -1.0 };
                sign[lo..=hi].iter_mut().for_each(|x| *x = s);
            }
            let chars: Vec<char> = text.chars().collect();
            let words = spans.iter().map(|s| chars[s.start..s.end].iter().collect()).collect();
            (a, sign, words)
        })
        .collect()
}

#[test]
fn planted_means_and_noise_energy() {
    let spec = spec();
    let d = correctness_direction(&spec);
    let data = corpus(&spec);
    let total: usize = data.iter().map(|(a, _, _)| a.n_tokens).sum();
    assert!(total >= 10_000, "{total} tokens");

    // projection onto d: w·sign + N(0, noise²/dim); residual energy noise²·(dim−1)/dim
    let mut sums = [(0.0f64, 0usize); 3]; // sign −1, 0, +1
    let mut residual = 0.0;
    for (a, sign, _) in &data {
        for t in 0..a.n_tokens {
            let v: Vec<f64> = a.vector(t, 0).iter().map(|&x| x as f64).collect();
            let proj: f64 = v.iter().zip(&d).map(|(x, y)| x * y).sum();
            let slot = &mut sums[(sign[t] + 1.0) as usize];
            slot.0 += proj;
            slot.1 += 1;
            residual += v.iter().map(|x| x * x).sum::<f64>() - proj * proj;
        }
    }
    for (k, expect) in [(0usize, -W), (1, 0.0), (2, W)] {
        let (s, n) = sums[k];
        assert!(n > 1000, "sign class {k} has only {n} tokens");
        let tol = 5.0 * NOISE / ((DIM * n) as f64).sqrt();
        let mean = s / n as f64;
        assert!((mean - expect).abs() < tol, "class {k}: mean {mean} expected {expect} ± {tol}");
    }
    let expect = NOISE * NOISE * (DIM - 1) as f64 / DIM as f64;
    let sd = NOISE * NOISE * (2.0 * (DIM - 1) as f64).sqrt() / DIM as f64;
    let mean = residual / total as f64;
    assert!((mean - expect).abs() < 5.0 * sd / (total as f64).sqrt(), "residual energy {mean}, expected {expect}");
}

#[test]
fn noiseless_token_layer_is_a_lookup_table() {
    let spec = spec();
    let data = corpus(&spec);
    let mut seen: std::collections::HashMap<&str, &[f32]> = std::collections::HashMap::new();
    for (a, _, words) in &data {
        for (t, w) in words.iter().enumerate() {
            let v = a.vector(t, 1);
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
            assert_eq!(*seen.entry(w.as_str()).or_insert(v), v, "token {w:?}");
        }
    }
    assert!(seen.len() > 20);
}

#[test]
fn synthesis_is_deterministic() {
    let spec = spec();
    let a = corpus(&spec);
    let b = corpus(&spec);
    assert!(a.iter().zip(&b).all(|(x, y)| x.0 == y.0));
    let other = SyntheticSpec { seed: 22, ..spec };
    let c = corpus(&other);
    assert_ne!(a[0].0, c[0].0);
}
