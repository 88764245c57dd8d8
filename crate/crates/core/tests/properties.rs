use badgepp::evaluation::{kendall_tau, rank_metrics};
use badgepp::io::{read_events, split_train_test, write_events, LoadOptions};
use badgepp::model::{Action, Dataset, Mark};
use badgepp::simulator::{sample_synthetic_params, simulate, StopRule, SyntheticConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulated(seed: u64, users: usize, total: usize) -> Dataset {
    let mut cfg = SyntheticConfig::desk();
    cfg.num_users = users;
    cfg.num_tags = 5;
    cfg.n_badges_q = 2;
    cfg.n_badges_a = 2;
    cfg.stop = StopRule::TotalEvents { total };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (params, model) = sample_synthetic_params(&cfg, &mut rng).unwrap();
    simulate(&params, &model, cfg.stop, &mut rng).unwrap().dataset
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_logs_are_well_formed(seed in any::<u64>(), users in 1usize..6, total in 1usize..300) {
        let d = simulated(seed, users, total);
        prop_assert_eq!(d.len(), total);
        let events = d.events();
        prop_assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
        for e in events {
            prop_assert!(e.time >= 0.0 && e.time <= d.horizon());
            prop_assert!(e.user < users);
            match e.mark {
                Mark::Question { tag } => prop_assert!(tag < 5),
                Mark::Answer { parent } => {
                    prop_assert!(events[parent].action() == Action::Question);
                    prop_assert!(events[parent].time < e.time);
                }
            }
        }
    }

    #[test]
    fn event_log_round_trips(seed in any::<u64>(), total in 1usize..200) {
        let d = simulated(seed, 3, total);
        let mut buf = Vec::new();
        write_events(&d, "days", &mut buf).unwrap();
        let (back, header) = read_events(&buf[..], LoadOptions::default()).unwrap();
        prop_assert_eq!(header.num_users, 3);
        prop_assert_eq!(back, d);
    }

    #[test]
    fn split_is_temporal(seed in any::<u64>(), fraction in 0.05f64..0.95) {
        let d = simulated(seed, 4, 240);
        let s = split_train_test(&d, fraction).unwrap();
        prop_assert!(s.test_events.windows(2).all(|w| w[0] < w[1]));
        for user in 0..4 {
            for action in [Action::Question, Action::Answer] {
                let idx = d.user_events(user, action);
                let end = match action {
                    Action::Question => s.train.question_end[user],
                    Action::Answer => s.train.answer_end[user],
                };
                let test: Vec<usize> = idx.iter().copied().filter(|i| s.test_events.contains(i)).collect();
                let n_train = idx.len() - test.len();
                if idx.len() < 2 {
                    prop_assert!(test.is_empty());
                    continue;
                }
                prop_assert!(n_train >= (fraction * idx.len() as f64).ceil() as usize);
                for &i in idx {
                    let t = d.event(i).time;
                    if test.contains(&i) {
                        prop_assert!(t > end);
                    } else {
                        prop_assert!(t <= end);
                    }
                }
            }
        }
    }

    #[test]
    fn kendall_tau_is_bounded_and_symmetric(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = kendall_tau(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - kendall_tau(&b, &a).unwrap()).abs() < 1e-12);
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        prop_assert!((ab + kendall_tau(&a, &neg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rank_scores_grow_with_k(rankings in prop::collection::vec((Just(()).prop_perturb(|_, mut rng| {
            let mut r: Vec<usize> = (0..8).collect();
            for i in (1..r.len()).rev() {
                r.swap(i, rng.random_range(0..=i));
            }
            r
        }), 0usize..10), 1..30)) {
        let (ranks, truths): (Vec<Vec<usize>>, Vec<usize>) = rankings.into_iter().unzip();
        let ks = [1, 2, 3, 5, 8];
        let scores = rank_metrics(&ranks, &truths, &ks).unwrap();
        let mut prev = (0.0, 0.0);
        for k in ks {
            let s = &scores[&k];
            prop_assert!(s.precision >= prev.0 && s.ndcg >= prev.1);
            prop_assert!(s.ndcg <= s.precision + 1e-12 && s.precision <= 1.0);
            prev = (s.precision, s.ndcg);
        }
        prop_assert!((scores[&1].precision - scores[&1].ndcg).abs() < 1e-12);
    }
}
