//! Solver outputs checked against independent re-computations.

#![allow(clippy::needless_range_loop)]

use dyninf::oracle::{
    brute_force_optimum, exact_loss, monte_carlo_loss, strategy_layout, Conditioning, EvalMode, StrategyClass,
    StrategyTable,
};
use dyninf::synth::{random_distribution, random_scenario, Shape};
use dyninf::*;
use num::{BigRational, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape(n_x: usize, n_y: usize, n_yhat: usize, horizon: usize, n_params: usize) -> Shape {
    Shape {
        n_x,
        n_y,
        n_yhat,
        horizon,
        n_params,
    }
}

fn zero_one(n: usize, nx: usize) -> LossTensor {
    LossTensor::from_fn(nx, n, n, |_, y, yh| if y == yh { 0.0 } else { 1.0 })
}

#[test]
fn bar_loss_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_scenario(&mut rng, shape(3, 3, 3, 2, 0), 0.2);
    let k = s.known_kernel().unwrap().to_rows();
    let l = s.loss.to_nested();
    for x in 0..3 {
        for yh in 0..3 {
            let direct: f64 = (0..3).map(|y| k[x][y] * l[x][y][yh]).sum();
            assert!((bar_loss(&s, x, yh).unwrap() - direct).abs() <= 1e-12);
        }
    }
}

#[test]
fn mixture_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = random_scenario(&mut rng, shape(3, 3, 3, 2, 3), 0.0);
    let (family, _) = s.family_and_prior().unwrap();
    let b = Belief::new(vec![0.2, 0.3, 0.5]);
    let mix = mixture_kernel(family, &b).unwrap().to_rows();
    let members: Vec<Vec<Vec<f64>>> = family.members.iter().map(QuantityKernel::to_rows).collect();
    for x in 0..3 {
        for y in 0..3 {
            let direct = 0.2 * members[0][x][y] + 0.3 * members[1][x][y] + 0.5 * members[2][x][y];
            assert!((mix[x][y] - direct).abs() <= 1e-12);
        }
    }
}

/// Two rounds, 0-1 loss. At x=0 the quantity is 0 with probability 0.6, at
/// x=1 it is 1 for sure; estimating 1 at x=0 moves the chain to x=1.
/// The myopic estimate at x=0 is 0 (expected loss 0.4 per round, 0.8 in
/// total) but estimating 1 costs 0.6 now and nothing later.
#[test]
fn lookahead_beats_the_myopic_estimate() {
    let s = Scenario {
        x_space: FiniteSpace::new(2).unwrap(),
        y_space: FiniteSpace::new(2).unwrap(),
        yhat_space: FiniteSpace::new(2).unwrap(),
        horizon: 2,
        init: Distribution::new(vec![1.0, 0.0]),
        obs_kernels: vec![ObservationKernel::from_fn(2, 2, |x, yh, x2| {
            let target = if x == 1 || yh == 1 { 1 } else { 0 };
            if x2 == target {
                1.0
            } else {
                0.0
            }
        })],
        quantity: QuantityModel::Known(QuantityKernel::from_rows(vec![vec![0.6, 0.4], vec![0.0, 1.0]]).unwrap()),
        loss: zero_one(2, 2),
    };
    let p = solve_known(&s).unwrap();
    assert_eq!(p.psi[1][0], 0, "last round is myopic");
    assert_eq!(p.psi[0][0], 1, "first round looks ahead");
    assert!((p.q[0][0][0] - 0.8).abs() < 1e-15);
    assert!((p.q[0][0][1] - 0.6).abs() < 1e-15);
    assert!((value_known(&s, &p).unwrap() - 0.6).abs() < 1e-15);
}

/// Reachable posteriors per round by exact rational Bayes updates, with
/// likelihoods `P(y=0|x,w) = tenths[w][x] / 10`.
fn rational_posteriors(tenths: &[[i64; 2]; 2], prior: [i64; 2], horizon: usize) -> Vec<Vec<Vec<BigRational>>> {
    let lik = |w: usize, x: usize, y: usize| {
        let k = tenths[w][x];
        BigRational::new(if y == 0 { k } else { 10 - k }.into(), 10.into())
    };
    let total_prior: i64 = prior.iter().sum();
    let root: Vec<BigRational> = prior
        .iter()
        .map(|&p| BigRational::new(p.into(), total_prior.into()))
        .collect();
    let mut rounds = vec![vec![root]];
    for _ in 1..horizon {
        let mut next: Vec<Vec<BigRational>> = Vec::new();
        for b in rounds.last().unwrap() {
            for x in 0..2 {
                for y in 0..2 {
                    let joint: Vec<BigRational> = b.iter().enumerate().map(|(w, p)| p * lik(w, x, y)).collect();
                    let total = joint.iter().fold(BigRational::zero(), |a, j| a + j);
                    if total.is_zero() {
                        continue;
                    }
                    let post: Vec<BigRational> = joint.iter().map(|j| j / &total).collect();
                    if !next.contains(&post) {
                        next.push(post);
                    }
                }
            }
        }
        rounds.push(next);
    }
    rounds
}

#[test]
fn reachable_nodes_match_exact_rational_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..40 {
        // coarse likelihoods make distinct histories collide exactly
        let mut s = random_scenario(&mut rng, shape(2, 2, 2, 3, 2), 0.0);
        let tenths = [
            [rng.gen_range(0..=10), rng.gen_range(0..=10)],
            [rng.gen_range(0..=10), rng.gen_range(0..=10)],
        ];
        let prior = if case % 2 == 0 { [1, 1] } else { [1, 3] };
        let members = tenths
            .iter()
            .map(|row| {
                QuantityKernel::from_fn(2, 2, |x, y| {
                    if y == 0 {
                        row[x] as f64 / 10.0
                    } else {
                        (10 - row[x]) as f64 / 10.0
                    }
                })
            })
            .collect();
        s.quantity = QuantityModel::Learning {
            family: ParametricFamily::new(members).unwrap(),
            prior: Belief::new(prior.iter().map(|&p| p as f64 / (prior[0] + prior[1]) as f64).collect()),
        };
        let exact = rational_posteriors(&tenths, prior, s.horizon);
        let graph = reachable_beliefs(&s, 1000).unwrap();
        let counts: Vec<usize> = exact.iter().map(Vec::len).collect();
        assert_eq!(graph.node_counts(), counts, "case {case}: {tenths:?}");
        for (round, nodes) in exact.iter().enumerate() {
            for b in nodes {
                let approx = Belief::new(b.iter().map(|r| r.to_f64().unwrap()).collect());
                assert!(graph.find(round, &approx).is_some(), "case {case} round {round}");
            }
        }
    }
}

#[test]
fn generated_data_follows_the_data_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s = random_scenario(&mut rng, shape(2, 2, 2, 2, 2), 0.0);
    assert!(generate_dataset(&s, 1, 0, 5).unwrap().is_empty());
    assert_eq!(
        generate_dataset(&s, 1, 3, 5).unwrap(),
        generate_dataset(&s, 1, 3, 5).unwrap()
    );

    // the first pair: X'_1 ~ init, Y'_1 ~ P(.|X'_1, w)
    let (family, _) = s.family_and_prior().unwrap();
    let seeds = 100_000u64;
    let mut counts = [[0u64; 2]; 2];
    for seed in 0..seeds {
        let (x, y) = generate_dataset(&s, 1, 1, seed).unwrap().pairs[0];
        counts[x][y] += 1;
    }
    for x in 0..2 {
        let nx: u64 = counts[x].iter().sum();
        for y in 0..2 {
            let p = family.likelihood(1, x, y);
            let freq = counts[x][y] as f64 / nx as f64;
            let sigma = (p * (1.0 - p) / nx as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * sigma, "x={x} y={y}: {freq} vs {p}");
        }
    }
}

fn forced_scenario(n_params: usize) -> Scenario {
    // one-hot everything: x cycles 0 -> 1 -> 2 -> 0, y = x mod 2
    let quantity = QuantityKernel::from_fn(3, 2, |x, y| if y == x % 2 { 1.0 } else { 0.0 });
    Scenario {
        x_space: FiniteSpace::new(3).unwrap(),
        y_space: FiniteSpace::new(2).unwrap(),
        yhat_space: FiniteSpace::new(2).unwrap(),
        horizon: 3,
        init: Distribution::new(vec![1.0, 0.0, 0.0]),
        obs_kernels: vec![ObservationKernel::from_fn(3, 2, |x, _, x2| {
            if x2 == (x + 1) % 3 {
                1.0
            } else {
                0.0
            }
        })],
        quantity: if n_params == 0 {
            QuantityModel::Known(quantity)
        } else {
            QuantityModel::Learning {
                family: ParametricFamily::new(vec![quantity; n_params]).unwrap(),
                prior: Belief::uniform(n_params),
            }
        },
        loss: LossTensor::from_fn(3, 2, 2, |x, y, yh| (x + 2 * y + 3 * yh) as f64 / 10.0),
    }
}

#[test]
fn deterministic_kernels_force_the_trajectory() {
    let s = forced_scenario(2);
    let expected = Dataset::new(vec![(0, 0), (1, 1), (2, 0), (0, 0)]);
    for seed in [0, 1, 99, u64::MAX] {
        assert_eq!(generate_dataset(&s, 0, 4, seed).unwrap(), expected);
    }
}

#[test]
fn deterministic_scenario_costs_its_single_trajectory() {
    let s = forced_scenario(0);
    let t = StrategyTable {
        class: StrategyClass::MarkovKnown,
        choices: vec![vec![1, 0, 1]; 3],
    };
    // x = 0, 1, 2 with y = 0, 1, 0 and estimates 1, 0, 1
    let by_hand = 0.3 + 0.3 + 0.5;
    let exact = exact_loss(&s, &t, None).unwrap();
    assert!((exact - by_hand).abs() < 1e-12);
    let mc = monte_carlo_loss(&s, &t, 1000, 4, None).unwrap();
    assert_eq!(mc.stderr, 0.0);
    assert!((mc.loss - exact).abs() < 1e-12);
}

#[test]
fn constant_loss_is_n_times_c_for_every_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let known = random_scenario(&mut rng, shape(2, 2, 2, 3, 0), 0.3);
    let learning = random_scenario(&mut rng, shape(2, 2, 2, 3, 2), 0.3);
    let flat = |s: &Scenario| Scenario {
        loss: LossTensor::from_fn(2, 2, 2, |_, _, _| 0.7),
        ..s.clone()
    };
    let (known, learning) = (flat(&known), flat(&learning));
    let marginal = Conditioning::Marginal { m: 2 };
    for (s, class, cond) in [
        (&known, StrategyClass::MarkovKnown, None),
        (&known, StrategyClass::HistoryKnown, None),
        (&learning, StrategyClass::MarkovOffline, Some(&marginal)),
        (&learning, StrategyClass::HistoryOffline, Some(&marginal)),
        (&learning, StrategyClass::MarkovOnline, None),
        (&learning, StrategyClass::HistoryOnline, None),
    ] {
        let layout = strategy_layout(s, class, cond).unwrap();
        for _ in 0..5 {
            let t = StrategyTable::random(class, &layout, 2, &mut rng);
            assert!((exact_loss(s, &t, cond).unwrap() - 2.1).abs() < 1e-12, "{class}");
        }
    }
}

#[test]
fn single_estimate_has_one_strategy() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = random_scenario(&mut rng, shape(2, 2, 1, 3, 0), 0.0);
    for class in [StrategyClass::MarkovKnown, StrategyClass::HistoryKnown] {
        let (t, loss) = brute_force_optimum(&s, class, None).unwrap();
        assert!(t.choices.iter().flatten().all(|&c| c == 0));
        assert_eq!(loss, exact_loss(&s, &t, None).unwrap());
    }
}

#[test]
fn one_round_search_finds_the_bayes_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let s = random_scenario(&mut rng, shape(3, 3, 3, 1, 0), 0.3);
        let (t, _) = brute_force_optimum(&s, StrategyClass::MarkovKnown, None).unwrap();
        assert_eq!(t.choices, solve_known(&s).unwrap().psi);
    }
}

#[test]
fn one_sample_is_one_reproducible_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let s = random_scenario(&mut rng, shape(3, 2, 2, 3, 0), 0.0);
    let t = StrategyTable::from_known_policy(&solve_known(&s).unwrap());
    let a = monte_carlo_loss(&s, &t, 1, 7, None).unwrap();
    assert_eq!(a, monte_carlo_loss(&s, &t, 1, 7, None).unwrap());
    assert_eq!(
        (a.mode, a.samples, a.stderr, a.seed),
        (EvalMode::MonteCarlo, 1, 0.0, Some(7))
    );
    assert!(monte_carlo_loss(&s, &t, 0, 7, None).is_err());
}

#[test]
fn dp_values_equal_exact_loss_of_extracted_strategies() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let known = random_scenario(&mut rng, shape(3, 2, 3, 3, 0), 0.3);
        let p = solve_known(&known).unwrap();
        let t = StrategyTable::from_known_policy(&p);
        assert!((exact_loss(&known, &t, None).unwrap() - value_known(&known, &p).unwrap()).abs() <= 1e-9);

        let learning = random_scenario(&mut rng, shape(3, 2, 3, 3, 3), 0.3);
        let p = solve_online(&learning).unwrap();
        let t = StrategyTable::from_online_policy(&learning, &p).unwrap();
        assert!((exact_loss(&learning, &t, None).unwrap() - value_online(&learning, &p).unwrap()).abs() <= 1e-9);

        let b = Belief::new(random_distribution(&mut rng, 3, 0.3));
        let p = solve_offline(&learning, &b).unwrap();
        let t = StrategyTable::from_offline_policy(&p);
        let cond = Conditioning::Belief(b);
        assert!(
            (exact_loss(&learning, &t, Some(&cond)).unwrap() - value_offline(&learning, &p).unwrap()).abs() <= 1e-9
        );
    }
}

#[test]
fn data_forcing_a_dirac_posterior_gives_the_known_solution() {
    let mut s = forced_scenario(0);
    let member_a = QuantityKernel::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
    let member_b = QuantityKernel::from_rows(vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
    s.quantity = QuantityModel::Learning {
        family: ParametricFamily::new(vec![member_a.clone(), member_b]).unwrap(),
        prior: Belief::uniform(2),
    };
    // y = 0 at x = 0 rules out the second member
    let p = offline_pipeline(&s, &Dataset::new(vec![(0, 0)])).unwrap();
    assert_eq!(p.belief, Belief::dirac(2, 0));
    let known = solve_known(&s.with_known_kernel(member_a)).unwrap();
    assert_eq!(p.tables, known);
}

#[test]
fn online_decision_ignores_history_with_one_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let s = random_scenario(&mut rng, shape(2, 2, 2, 3, 1), 0.0);
    let p = solve_online(&s).unwrap();
    for x in 0..2 {
        let fresh = act_online(&s, &p, &[], x).unwrap().0;
        assert_eq!(fresh, p.psi[0][0][x]);
        for hist in [vec![(0, 0)], vec![(1, 1), (0, 1)]] {
            let round = hist.len();
            assert_eq!(act_online(&s, &p, &hist, x).unwrap().0, p.psi[round][0][x]);
        }
    }
}
