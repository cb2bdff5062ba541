use gaze_act::forest::tree::Node;
use gaze_act::forest::{train_forest, ForestModel, ForestParams};
use gaze_act::ActivityLabel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const TWO: [ActivityLabel; 2] = [ActivityLabel::Read, ActivityLabel::Browse];

/// Two overlapping Gaussian classes, so both error estimates are well above zero.
fn noisy(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<ActivityLabel>) {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..2);
        x.push((0..5).map(|d| if d < 2 { c as f64 * 1.5 } else { 0.0 } + noise.sample(rng)).collect());
        y.push(TWO[c]);
    }
    (x, y)
}

fn error_rate(model: &ForestModel, x: &[Vec<f64>], y: &[ActivityLabel]) -> f64 {
    x.iter().zip(y).filter(|(x, y)| model.predict(x).unwrap() != **y).count() as f64 / y.len() as f64
}

#[test]
fn oob_error_tracks_held_out_error() {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = noisy(500, &mut rng);
        let (xt, yt) = noisy(500, &mut rng);
        let model = train_forest(&x, &y, &ForestParams { n_trees: 100, seed, ..ForestParams::default() }).unwrap();
        let held_out = error_rate(&model, &xt, &yt);
        worst = worst.max((model.oob_error - held_out).abs());
        assert!(
            (model.oob_error - held_out).abs() <= 0.10,
            "seed {seed}: oob {} vs held-out {held_out}",
            model.oob_error
        );
    }
    assert!(worst > 0.0, "estimates should differ somewhere");
}

#[test]
fn separable_two_class_fit() {
    let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
    let y: Vec<ActivityLabel> = (0..60).map(|i| TWO[(i >= 30) as usize]).collect();
    let model = train_forest(&x, &y, &ForestParams { n_trees: 50, ..ForestParams::default() }).unwrap();
    assert_eq!(error_rate(&model, &x, &y), 0.0);
    assert!(model.oob_error <= 0.05, "{}", model.oob_error);
}

#[test]
fn single_class_predicts_it_everywhere() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
    let y = vec![ActivityLabel::Write; 20];
    let model = train_forest(&x, &y, &ForestParams { n_trees: 10, ..ForestParams::default() }).unwrap();
    assert_eq!(model.oob_error, 0.0);
    for v in [-5.0, 3.0, 100.0] {
        assert_eq!(model.predict(&[v]).unwrap(), ActivityLabel::Write);
        assert_eq!(model.predict_proba(&[v]).unwrap(), vec![1.0]);
    }
}

fn dataset(points: &[(u8, u8, u8, bool)]) -> (Vec<Vec<f64>>, Vec<ActivityLabel>) {
    let x = points.iter().map(|p| vec![p.0 as f64, p.1 as f64, p.2 as f64]).collect();
    let y = points.iter().map(|p| TWO[p.3 as usize]).collect();
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn proba_is_consistent_with_votes(
        points in prop::collection::vec((0u8..10, 0u8..10, 0u8..10, any::<bool>()), 4..40),
        seed in 0u64..1000,
    ) {
        let (x, y) = dataset(&points);
        let model = train_forest(&x, &y, &ForestParams { n_trees: 7, seed, ..ForestParams::default() }).unwrap();
        let mut reversed = model.clone();
        reversed.trees.reverse();
        for p in &x {
            let votes = model.votes(p).unwrap();
            let proba = model.predict_proba(p).unwrap();
            prop_assert_eq!(votes.iter().sum::<u32>(), 7);
            prop_assert!((proba.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let best = (0..votes.len()).fold(0, |b, i| if votes[i] > votes[b] { i } else { b });
            prop_assert_eq!(model.predict(p).unwrap(), model.classes[best]);
            prop_assert_eq!(reversed.predict(p).unwrap(), model.predict(p).unwrap());
        }
    }

    /// The fitted trees depend on the transformed feature only through its
    /// order: same features, same leaf counts, and each threshold is the
    /// midpoint of the images of the same pair of values. Routing of values
    /// that fall strictly between a pair is not invariant under a nonlinear
    /// map, so OOB error is not compared.
    #[test]
    fn monotone_feature_transform_preserves_trees(
        points in prop::collection::vec((0u8..10, 0u8..10, 0u8..10, any::<bool>()), 4..40),
        feature in 0usize..3,
        seed in 0u64..1000,
    ) {
        let (x, y) = dataset(&points);
        let g = |v: f64| (v * 0.7).exp() + v.powi(3);
        let xt: Vec<Vec<f64>> = x.iter().map(|r| {
            let mut r = r.clone();
            r[feature] = g(r[feature]);
            r
        }).collect();
        let params = ForestParams { n_trees: 9, seed, ..ForestParams::default() };
        let a = train_forest(&x, &y, &params).unwrap();
        let b = train_forest(&xt, &y, &params).unwrap();
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            prop_assert_eq!(ta.nodes.len(), tb.nodes.len());
            for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
                match (na, nb) {
                    (Node::Leaf { counts: ca }, Node::Leaf { counts: cb }) => prop_assert_eq!(ca, cb),
                    (
                        Node::Internal { feature: fa, threshold: sa, left: la, right: ra },
                        Node::Internal { feature: fb, threshold: sb, left: lb, right: rb },
                    ) => {
                        prop_assert_eq!((fa, la, ra), (fb, lb, rb));
                        if *fa != feature {
                            prop_assert_eq!(sa, sb);
                        } else {
                            let paired = values.iter().any(|&lo| values.iter().any(|&hi| {
                                let m = (g(lo) + g(hi)) / 2.0;
                                lo < hi && (lo + hi) / 2.0 == *sa && (m - *sb).abs() <= 1e-12 * m
                            }));
                            prop_assert!(paired, "threshold {} vs {}", sa, sb);
                        }
                    }
                    _ => prop_assert!(false, "node kinds differ"),
                }
            }
        }
    }
}
