use apz_core::parser::Label;
use apz_core::rng::rng;
use apz_probe::classifier::{
    evaluate, forward, gradient_check, loss_gradient, train, Architecture, ProbeExample, ProbeModel, TrainConfig,
    POSITIONS,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn example(channels: usize, features: Vec<f32>, label: Label) -> ProbeExample {
    assert_eq!(features.len(), POSITIONS * channels);
    ProbeExample { puzzle_id: "p".into(), statement_index: 0, label, channels, features }
}

fn random_example(r: &mut impl Rng, channels: usize) -> ProbeExample {
    let features = (0..POSITIONS * channels).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
    let label = if r.random_bool(0.5) { Label::Correct } else { Label::Incorrect };
    example(channels, features, label)
}

/// Two Gaussian blobs along the first channel of the middle position.
fn separable(n: usize, channels: usize, seed: u64) -> Vec<ProbeExample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let mut e = random_example(&mut r, channels);
            e.label = if i % 2 == 0 { Label::Correct } else { Label::Incorrect };
            e.features[2 * channels] += if i % 2 == 0 { 2.5 } else { -2.5 };
            e.statement_index = i;
            e
        })
        .collect()
}

fn manual(arch: Architecture, params: Vec<f64>) -> ProbeModel {
    let mut m = ProbeModel::zeros(arch).unwrap();
    assert_eq!(m.params.len(), params.len());
    m.params = params;
    m
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn forward_matches_hand_computed_values() {
    // conv outputs 1.85, 3.1, 4.35; z1 = 0.865; z2 = 0.73; z3 = 0.895
    let arch = Architecture { in_channels: 1, conv_channels: 1, kernel: 3, hidden: [1, 1] };
    let m = manual(arch, vec![0.5, 1.0, -0.25, 0.1, 0.2, -0.1, 0.3, -0.5, 2.0, -1.0, 1.5, -0.2]);
    let e = example(1, vec![1.0, 2.0, 3.0, 4.0, 5.0], Label::Correct);
    let p = forward(&m, &e).unwrap();
    assert!(rel(p, 0.7099209183344533) <= 1e-6, "{p}");

    // two channels: exercises the [position][channel] input layout and the
    // channel-major flatten feeding the first dense layer
    let arch = Architecture { in_channels: 2, conv_channels: 2, kernel: 3, hidden: [2, 1] };
    let params = vec![
        0.3, -0.2, 0.1, 0.5, 0.4, -0.3, -0.1, 0.2, 0.6, 0.7, -0.5, 0.2, // conv [out][in][k]
        0.05, -0.1, // conv bias
        0.1, 0.2, -0.3, 0.4, -0.5, 0.6, -0.2, 0.3, 0.1, -0.4, 0.5, 0.2, // w1
        0.1, -0.2, // b1
        0.8, -0.6, 0.3, // w2, b2
        -1.2, 0.4, // w3, b3
    ];
    let m = manual(arch, params);
    let e = example(2, vec![1.0, -1.0, 2.0, 0.0, 3.0, 1.0, 4.0, 0.0, 5.0, -1.0], Label::Correct);
    let p = forward(&m, &e).unwrap();
    assert!(rel(p, 0.37697682587429193) <= 1e-6, "{p}");
}

#[test]
fn gradients_agree_with_central_differences() {
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
        let e = random_example(&mut r, ci);
        let err = gradient_check(&model, &e, 1e-5).unwrap();
        let half = gradient_check(&model, &e, 5e-6).unwrap();
        assert!(err <= 1e-4, "trial {trial}: {err:e}");
        assert!(half <= 1e-4, "trial {trial} at eps/2: {half:e}");
        worst = worst.max(err);
    }
    println!("worst relative gradient error {worst:e}");
}

#[test]
fn gradient_check_rejects_out_of_range_epsilon() {
    let model = ProbeModel::init(Architecture { in_channels: 1, conv_channels: 1, kernel: 3, hidden: [1, 1] }, 0).unwrap();
    let e = example(1, vec![0.0; 5], Label::Correct);
    assert!(gradient_check(&model, &e, 1e-2).is_err());
    assert!(gradient_check(&model, &e, 1e-8).is_err());
}

#[test]
fn loss_gradient_of_a_zero_model_hits_only_the_output_bias() {
    let arch = Architecture { in_channels: 2, conv_channels: 2, kernel: 3, hidden: [3, 2] };
    let model = ProbeModel::zeros(arch).unwrap();
    let e = example(2, vec![1.0; 10], Label::Correct);
    let (loss, grad) = loss_gradient(&model, &e).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    let last = grad.len() - 1;
    assert!((grad[last] + 0.5).abs() < 1e-15);
    assert!(grad[..last].iter().all(|&g| g == 0.0));
}

#[test]
fn same_seed_reproduces_weights() {
    let data = separable(200, 4, 1);
    let (tr, va) = data.split_at(160);
    let cfg = TrainConfig { epochs: 3, seed: 9, conv_channels: 8, hidden: [16, 8], ..Default::default() };
    let a = train(tr, va, &cfg).unwrap();
    let b = train(tr, va, &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.history, b.history);
    let c = train(tr, va, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.model.params, c.model.params);
}

#[test]
fn training_reduces_loss_and_separates_blobs() {
    let data = separable(400, 4, 2);
    let (tr, rest) = data.split_at(300);
    let (va, te) = rest.split_at(50);
    let cfg = TrainConfig { epochs: 8, seed: 1, conv_channels: 16, hidden: [32, 16], ..Default::default() };
    let out = train(tr, va, &cfg).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
    assert!(losses[losses.len() - 1] < losses[0], "{losses:?}");
    assert!(losses[0] < std::f64::consts::LN_2 + 0.1, "{losses:?}");
    let m = evaluate(&out.model, te).unwrap();
    assert!(m.accuracy > 0.95, "{m:?}");
    // the kept epoch is the earliest one reaching the best validation accuracy
    let accs: Vec<f64> = out.history.iter().map(|h| h.validation_accuracy.unwrap()).collect();
    let best = accs.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(out.best_epoch, accs.iter().position(|&a| a == best).unwrap());
}

#[test]
fn evaluate_matches_a_manual_recount() {
    let mut r = rng(77);
    let arch = Architecture { in_channels: 3, conv_channels: 4, kernel: 3, hidden: [6, 3] };
    let model = ProbeModel::init(arch, 5).unwrap();
    let examples: Vec<_> = (0..20).map(|_| random_example(&mut r, 3)).collect();
    let m = evaluate(&model, &examples).unwrap();

    let (mut tp, mut fn_, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for e in &examples {
        let says_correct = forward(&model, e).unwrap() >= 0.5;
        match (e.label, says_correct) {
            (Label::Correct, true) => tp += 1,
            (Label::Correct, false) => fn_ += 1,
            (Label::Incorrect, true) => fp += 1,
            (Label::Incorrect, false) => tn += 1,
        }
    }
    assert_eq!(m.confusion, [[tp, fn_], [fp, tn]]);
    assert_eq!(m.count, 20);
    assert!((m.accuracy - (tp + tn) as f64 / 20.0).abs() < 1e-15);
    assert_eq!(m.correct.support, tp + fn_);
    assert_eq!(m.incorrect.support, fp + tn);
    if tp + fp > 0 {
        assert!((m.correct.precision.unwrap() - tp as f64 / (tp + fp) as f64).abs() < 1e-15);
    }
    if tn + fn_ > 0 {
        assert!((m.incorrect.precision.unwrap() - tn as f64 / (tn + fn_) as f64).abs() < 1e-15);
    }
}

#[test]
fn one_half_everywhere_counts_as_correct() {
    let arch = Architecture { in_channels: 1, conv_channels: 1, kernel: 3, hidden: [1, 1] };
    let model = ProbeModel::zeros(arch).unwrap();
    let examples: Vec<_> = (0..10)
        .map(|i| example(1, vec![i as f32; 5], if i % 2 == 0 { Label::Correct } else { Label::Incorrect }))
        .collect();
    let m = evaluate(&model, &examples).unwrap();
    assert_eq!(m.accuracy, 0.5);
    assert_eq!(m.confusion, [[5, 0], [5, 0]]);
    assert_eq!(m.incorrect.precision, None);
}
