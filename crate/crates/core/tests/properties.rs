use dyninf::oracle::{
    brute_force_optimum, exact_loss, monte_carlo_loss, strategy_layout, StrategyClass, StrategyTable,
};
use dyninf::synth::{random_distribution, random_scenario, Shape};
use dyninf::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A tiny random scenario built from a proptest-chosen seed and shape.
fn scenario(learning: bool) -> impl Strategy<Value = (Scenario, u64)> {
    (
        any::<u64>(),
        1..=3usize,
        1..=3usize,
        1..=3usize,
        1..=3usize,
        1..=3usize,
        0..3usize,
    )
        .prop_map(move |(seed, n_x, n_y, n_yhat, horizon, n_params, sparse)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = Shape {
                n_x,
                n_y: if learning { n_y.min(n_yhat) } else { n_y },
                n_yhat,
                horizon,
                n_params: if learning { n_params } else { 0 },
            };
            (random_scenario(&mut rng, shape, sparse as f64 * 0.2), seed)
        })
}

fn row_ok(row: &[f64]) -> bool {
    row.iter().all(|&p| p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_is_linear_in_the_belief((s, seed) in scenario(true)) {
        let (family, _) = s.family_and_prior().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let b1 = random_distribution(&mut rng, family.n_params(), 0.3);
        let b2 = random_distribution(&mut rng, family.n_params(), 0.3);
        let m1 = mixture_kernel(family, &Belief::new(b1.clone())).unwrap();
        let m2 = mixture_kernel(family, &Belief::new(b2.clone())).unwrap();
        for alpha in [0.0, 0.25, 0.5, 1.0] {
            let b: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let m = mixture_kernel(family, &Belief::new(b)).unwrap();
            for x in 0..s.n_x() {
                prop_assert!(row_ok(m.row(x)));
                for y in 0..s.n_y() {
                    let lin = alpha * m1.get(x, y) + (1.0 - alpha) * m2.get(x, y);
                    prop_assert!((m.get(x, y) - lin).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn generated_data_is_reproducible((s, seed) in scenario(true), m in 0..6usize) {
        let w = seed as usize % s.family_and_prior().unwrap().0.n_params();
        let a = generate_dataset(&s, w, m, seed).unwrap();
        prop_assert_eq!(a.len(), m);
        prop_assert_eq!(a, generate_dataset(&s, w, m, seed).unwrap());
    }

    #[test]
    fn known_tables_satisfy_the_recursion((s, _) in scenario(false)) {
        let p = solve_known(&s).unwrap();
        let n = s.horizon;
        let k = s.known_kernel().unwrap();
        let losses = s.loss.entries();
        let (lo, hi) = losses.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
        for i in 0..n {
            for x in 0..s.n_x() {
                let v = p.v[i][x];
                prop_assert_eq!(v, p.q[i][x][p.psi[i][x]]);
                let rounds = (n - i) as f64;
                prop_assert!(lo * rounds - 1e-12 <= v && v <= hi * rounds + 1e-12);
                for yh in 0..s.n_yhat() {
                    prop_assert!(v <= p.q[i][x][yh]);
                    // lower indices never tie with the chosen estimate
                    if yh < p.psi[i][x] {
                        prop_assert!(p.q[i][x][yh] > v);
                    }
                    let bar: f64 = (0..s.n_y()).map(|y| k.get(x, y) * s.loss.get(x, y, yh)).sum();
                    let future: f64 = if i + 1 < n {
                        (0..s.n_x()).map(|x2| s.obs_kernel(i).get(x, yh, x2) * p.v[i + 1][x2]).sum()
                    } else {
                        0.0
                    };
                    prop_assert!((p.q[i][x][yh] - (bar + future)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn posterior_ignores_data_order((s, seed) in scenario(true)) {
        let (family, prior) = s.family_and_prior().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let w = rng.gen_range(0..family.n_params());
        let d = generate_dataset(&s, w, 5, seed).unwrap();
        let Ok(batch) = posterior_from_dataset(family, prior, &d) else {
            // w may carry zero prior mass
            prop_assert_eq!(prior.probs[w], 0.0);
            return Ok(());
        };
        let mut pairs = d.pairs.clone();
        for _ in 0..3 {
            for i in (1..pairs.len()).rev() {
                pairs.swap(i, rng.gen_range(0..=i));
            }
            let shuffled = posterior_from_dataset(family, prior, &Dataset::new(pairs.clone())).unwrap();
            prop_assert!(batch.linf_distance(&shuffled) <= 1e-12);
        }
        let mut seq = prior.clone();
        for &(x, y) in &d.pairs {
            seq = belief_update(family, &seq, x, y).unwrap();
        }
        prop_assert!(batch.linf_distance(&seq) <= 1e-12);
        prop_assert!((batch.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tilde_loss_is_the_mixture_bar_loss((s, seed) in scenario(true)) {
        let (family, _) = s.family_and_prior().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let b = Belief::new(random_distribution(&mut rng, family.n_params(), 0.3));
        let mixed = s.with_known_kernel(mixture_kernel(family, &b).unwrap());
        for x in 0..s.n_x() {
            for yh in 0..s.n_yhat() {
                let t = tilde_loss(family, &s.loss, &b, x, yh).unwrap();
                prop_assert!((t - bar_loss(&mixed, x, yh).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn online_beliefs_are_normalized((s, _) in scenario(true)) {
        let p = solve_online(&s).unwrap();
        for round in &p.graph.nodes {
            for node in round {
                prop_assert!((node.belief.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(node.belief.probs.iter().all(|&b| b >= 0.0));
            }
        }
        prop_assert_eq!(p.graph.nodes[0].len(), 1);
    }

    #[test]
    fn nothing_to_learn_means_known_values((s, seed) in scenario(false), n_params in 1..4usize) {
        let kernel = s.known_kernel().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let learning = Scenario {
            quantity: QuantityModel::Learning {
                family: ParametricFamily::new(vec![kernel; n_params]).unwrap(),
                prior: Belief::new(random_distribution(&mut rng, n_params, 0.0)),
            },
            ..s.clone()
        };
        let known = solve_known(&s).unwrap();
        let online = solve_online(&learning).unwrap();
        prop_assert!(online.graph.node_counts().iter().all(|&c| c == 1));
        for i in 0..s.horizon {
            for x in 0..s.n_x() {
                prop_assert!((online.v[i][0][x] - known.v[i][x]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn exact_loss_scales_with_the_loss((s, seed) in scenario(false)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let layout = strategy_layout(&s, StrategyClass::MarkovKnown, None).unwrap();
        let (best, best_loss) = brute_force_optimum(&s, StrategyClass::MarkovKnown, None).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let scaled = Scenario { loss: s.loss.scaled(alpha), ..s.clone() };
            let t = StrategyTable::random(StrategyClass::MarkovKnown, &layout, s.n_yhat(), &mut rng);
            let a = exact_loss(&s, &t, None).unwrap();
            prop_assert!((exact_loss(&scaled, &t, None).unwrap() - alpha * a).abs() <= 1e-9 * alpha.max(1.0));
            let (scaled_best, _) = brute_force_optimum(&scaled, StrategyClass::MarkovKnown, None).unwrap();
            prop_assert_eq!(&scaled_best, &best);
        }
        for _ in 0..100 {
            let t = StrategyTable::random(StrategyClass::MarkovKnown, &layout, s.n_yhat(), &mut rng);
            prop_assert!(best_loss <= exact_loss(&s, &t, None).unwrap());
        }
    }

    #[test]
    fn monte_carlo_is_reproducible((s, seed) in scenario(false)) {
        let t = StrategyTable::from_known_policy(&solve_known(&s).unwrap());
        let a = monte_carlo_loss(&s, &t, 500, seed, None).unwrap();
        let b = monte_carlo_loss(&s, &t, 500, seed, None).unwrap();
        prop_assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}
