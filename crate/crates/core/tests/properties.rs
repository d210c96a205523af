use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mobius_nli::autodiff::softmax;
use mobius_nli::compose::{compose_chain, compose_euclidean, compose_tree, ChainDirection, EuclideanMode};
use mobius_nli::data::{gen_adjnoun, gen_numbers, AdjNounConfig, Label, NumbersConfig, RawSentence};
use mobius_nli::embedding::EmbeddingTable;
use mobius_nli::geometry::{norm, sq_norm, CurvatureSpace};
use mobius_nli::gradcheck::random_tree;
use mobius_nli::metrics::evaluate;
use mobius_nli::model::{margin_loss, order_energy, pair_energy, select_threshold};
use mobius_nli::treeparse::{parse_raw, ParseTree};

/// A point of the unit ball with norm at most `max_norm`.
fn ball_point(dim: usize, max_norm: f64) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0..max_norm).prop_map(|(x, r)| {
        let n = norm(&x);
        if n == 0.0 {
            x
        } else {
            x.iter().map(|v| v * r / n).collect()
        }
    })
}

fn ball_pair(max_norm: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(move |d| (ball_point(d, max_norm), ball_point(d, max_norm)))
}

fn table(dim: usize, rows: usize, seed: u64) -> EmbeddingTable {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = 0.9 / (dim as f64).sqrt();
    EmbeddingTable::from_rows(
        (0..rows)
            .map(|_| (0..dim).map(|_| rng.gen_range(-max..max)).collect())
            .collect(),
    )
    .unwrap()
}

/// Direct recursion on the tree, independent of the traversal arrays.
fn fold_tree(tree: &ParseTree, t: &EmbeddingTable, space: &CurvatureSpace) -> Vec<f64> {
    match tree {
        ParseTree::Leaf(tok) => t.get(tok.id).unwrap().to_vec(),
        ParseTree::Node(l, r) => space
            .mobius_add(&fold_tree(l, t, space), &fold_tree(r, t, space))
            .unwrap()
            .into_vec(),
    }
}

proptest! {
    #[test]
    fn projection_lands_inside(x in prop::collection::vec(-100.0f64..100.0, 1..10), c in 0.01f64..10.0) {
        let space = CurvatureSpace::new(x.len(), c).unwrap();
        let p = space.project(&x).unwrap();
        prop_assert!(c * sq_norm(&p) < 1.0);
    }

    #[test]
    fn mobius_sum_stays_in_ball((u, v) in ball_pair(0.999)) {
        let space = CurvatureSpace::unit_ball(u.len()).unwrap();
        let w = space.mobius_add(&u, &v).unwrap();
        prop_assert!(sq_norm(&w) < 1.0);
    }

    #[test]
    fn left_cancellation((a, b) in ball_pair(0.95)) {
        let space = CurvatureSpace::unit_ball(a.len()).unwrap();
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let back = space.mobius_add(&neg, &space.mobius_add(&a, &b).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_multiplication_inverts(x in (1usize..=8).prop_flat_map(|d| ball_point(d, 0.5)), k in 2usize..=8) {
        let space = CurvatureSpace::unit_ball(x.len()).unwrap();
        let kx = space.mobius_scalar_mul(k as f64, &x).unwrap();
        let back = space.mobius_scalar_mul(1.0 / k as f64, &kx).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_forms_agree((u, v) in ball_pair(0.9), c in 0.1f64..4.0) {
        let space = CurvatureSpace::new(u.len(), 1.0).unwrap();
        let a = space.distance(&u, &v).unwrap();
        let b = space.distance_arcosh(&u, &v).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a));
        // scaling both points by 1/sqrt(c) maps the unit ball onto the c-ball
        let s = 1.0 / c.sqrt();
        let cu: Vec<f64> = u.iter().map(|x| x * s).collect();
        let cv: Vec<f64> = v.iter().map(|x| x * s).collect();
        let scaled = CurvatureSpace::new(u.len(), c).unwrap().distance(&cu, &cv).unwrap();
        prop_assert!((scaled - a * s).abs() < 1e-8 * (1.0 + a));
    }

    #[test]
    fn energy_is_nonnegative_and_zero_on_the_diagonal((u, v) in ball_pair(0.95), beta in 0.0f64..=1.0) {
        let space = CurvatureSpace::unit_ball(u.len()).unwrap();
        prop_assert!(pair_energy(&u, &v, beta, &space) >= 0.0);
        prop_assert!(pair_energy(&u, &u, beta, &space).abs() < 1e-12);
    }

    #[test]
    fn margin_loss_is_monotone_in_positive_distance(
        (u, v) in ball_pair(0.9),
        t in 0.0f64..1.0,
        alpha in 0.01f64..1.0,
        beta in 0.0f64..=1.0,
    ) {
        let space = CurvatureSpace::unit_ball(u.len()).unwrap();
        // a point on the geodesic from u to v is no farther from u than v is
        let closer = space.geodesic_point(&u, &v, t).unwrap().into_vec();
        prop_assert!(margin_loss(&[(&u, &v)], &[], alpha, beta, &space) >= 0.0);
        let full = margin_loss(&[(&u, &v)], &[], alpha, 1.0, &space);
        let part = margin_loss(&[(&u, &closer)], &[], alpha, 1.0, &space);
        prop_assert!(part <= full + 1e-12);
        let neg = margin_loss(&[], &[(&u, &v)], alpha, beta, &space);
        prop_assert!((0.0..=alpha).contains(&neg));
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-10.0f64..10.0, 2..4)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_energy_vanishes_exactly_below(
        x in prop::collection::vec(-1.0f64..1.0, 1..8),
        gaps in prop::collection::vec(0.0f64..1.0, 8),
        bump in 0usize..8,
    ) {
        let y: Vec<f64> = x.iter().zip(&gaps).map(|(a, g)| a - g).collect();
        prop_assert_eq!(order_energy(&x, &y).unwrap(), 0.0);
        let mut above = y.clone();
        let i = bump % x.len();
        above[i] = x[i] + 0.5;
        prop_assert!(order_energy(&x, &above).unwrap() > 0.0);
    }

    #[test]
    fn tree_arrays_match_recursion(leaves in 1usize..=15, seed in any::<u64>(), dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = (0..leaves).collect();
        let tree = random_tree(&mut rng, &ids);
        let arrays = tree.post_order_arrays();
        prop_assert_eq!(arrays.len(), 2 * leaves - 1);
        prop_assert_eq!(arrays.root_index(), arrays.len() - 1);
        let t = table(dim, leaves, seed);
        let space = CurvatureSpace::unit_ball(dim).unwrap();
        let composed = compose_tree(&arrays, &t, &space).unwrap();
        let folded = fold_tree(&tree, &t, &space);
        prop_assert_eq!(composed.coords(), folded.as_slice());
        prop_assert!(sq_norm(&composed) < 1.0);
        let reparsed = parse_raw(&tree.to_sexpr()).unwrap();
        prop_assert_eq!(reparsed.to_sexpr(), tree.to_sexpr());
    }

    #[test]
    fn caterpillar_tree_equals_right_chain(leaves in 1usize..=10, seed in any::<u64>()) {
        let ids: Vec<usize> = (0..leaves).collect();
        let t = table(3, leaves, seed);
        let space = CurvatureSpace::unit_ball(3).unwrap();
        let arrays = mobius_nli::treeparse::TraversalArrays::left_branching(&ids).unwrap();
        let tree = compose_tree(&arrays, &t, &space).unwrap();
        let chain = compose_chain(&ids, &t, &space, ChainDirection::Right).unwrap();
        prop_assert_eq!(tree, chain);
    }

    #[test]
    fn euclidean_average_ignores_order(ids in prop::collection::vec(0usize..6, 1..8), seed in any::<u64>()) {
        let t = table(4, 6, seed);
        let mut reversed = ids.clone();
        reversed.reverse();
        let a = compose_euclidean(&ids, &t, EuclideanMode::Average).unwrap();
        let b = compose_euclidean(&reversed, &t, EuclideanMode::Average).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_matches_counts(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..50)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = evaluate(&pred, &gold, 3).unwrap();
        prop_assert_eq!(r.confusion.total() as usize, pairs.len());
        let right = pairs.iter().filter(|(p, g)| p == g).count();
        prop_assert_eq!(r.confusion.trace() as usize, right);
        prop_assert_eq!(r.accuracy, right as f64 / pairs.len() as f64);
        prop_assert!(r.f1.is_none());
    }

    #[test]
    fn binary_f1_is_the_harmonic_mean(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..50)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = evaluate(&pred, &gold, 2).unwrap();
        let (p, rc, f1) = (r.precision.unwrap(), r.recall.unwrap(), r.f1.unwrap());
        if p + rc > 0.0 {
            prop_assert!((f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
        } else {
            prop_assert_eq!(f1, 0.0);
        }
    }

    #[test]
    fn threshold_is_optimal(points in prop::collection::vec((0u8..6, any::<bool>()), 1..40)) {
        let scores: Vec<f64> = points.iter().map(|(s, _)| *s as f64).collect();
        let labels: Vec<bool> = points.iter().map(|(_, e)| *e).collect();
        let choice = select_threshold(&scores, &labels).unwrap();
        let best = (0..=6)
            .map(|t| scores.iter().zip(&labels).filter(|(&s, &e)| (s < t as f64) == e).count())
            .max()
            .unwrap();
        prop_assert_eq!(choice.correct, best);
    }
}

fn number(s: &RawSentence) -> u32 {
    s.tokens().concat().parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn numbers_labels_follow_the_comparison(seed in any::<u64>(), n in 2usize..60) {
        let cfg = NumbersConfig { train: n, validation: n / 2, test: n / 2, seed, ..Default::default() };
        let split = gen_numbers(&cfg).unwrap();
        prop_assert_eq!(&split, &gen_numbers(&cfg).unwrap());
        let mut seen = std::collections::HashSet::new();
        for s in split.train.iter().chain(&split.validation).chain(&split.test) {
            let (a, b) = (number(&s.premise), number(&s.hypothesis));
            prop_assert_ne!(a, b);
            prop_assert_eq!(s.label == Label::Entailment, a < b);
            prop_assert!(seen.insert(s.key()));
        }
    }

    #[test]
    fn adjnoun_positives_repeat_the_noun(seed in any::<u64>(), half in 5usize..10) {
        let n = 2 * half;
        let cfg = AdjNounConfig { vocab_size: n, train: 2 * n, validation: n, test: n, seed };
        let split = gen_adjnoun(&cfg).unwrap();
        prop_assert_eq!(split.vocab.len(), n + 1);
        let mut seen = std::collections::HashSet::new();
        for s in split.train.iter().chain(&split.validation).chain(&split.test) {
            let p = s.premise.tokens();
            let h = s.hypothesis.tokens();
            prop_assert_eq!(p.len(), 1);
            prop_assert!(h[0].starts_with('a') && h[1].starts_with('n'));
            prop_assert_eq!(s.label == Label::Entailment, p[0] == h[1]);
            prop_assert!(seen.insert(s.key()));
        }
    }
}
