use badgepp::inference::{fit, FitOptions};
use badgepp::model::dataset_log_likelihood;
use badgepp::simulator::{sample_synthetic_params, simulate, StopRule, SyntheticConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic(seed: u64) -> (badgepp::model::Dataset, badgepp::model::ModelConfig) {
    let mut cfg = SyntheticConfig::desk();
    cfg.num_users = 8;
    cfg.stop = StopRule::TotalEvents { total: 8 * 200 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (params, model) = sample_synthetic_params(&cfg, &mut rng).unwrap();
    (simulate(&params, &model, cfg.stop, &mut rng).unwrap().dataset, model)
}

#[test]
fn final_bound_is_the_likelihood_of_the_returned_parameters() {
    for seed in [1, 2, 3] {
        let (data, model) = synthetic(seed);
        let report = fit(&data, &model, &FitOptions { tol: 1e-7, max_iters: 1000, seed: 0 }).unwrap();
        assert!(report.converged);
        let ll = dataset_log_likelihood(&data, &report.params, &model).unwrap();
        let last = *report.lower_bound_trace.last().unwrap();
        approx::assert_relative_eq!(last, ll, max_relative = 1e-10);
    }
}

#[test]
fn fits_are_reproducible_and_insensitive_to_initialization() {
    let (data, model) = synthetic(4);
    let options = |seed| FitOptions { tol: 1e-8, max_iters: 500, seed };
    let a = fit(&data, &model, &options(0)).unwrap();
    let b = fit(&data, &model, &options(0)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.lower_bound_trace, b.lower_bound_trace);
    let c = fit(&data, &model, &options(99)).unwrap();
    let (la, lc) = (a.lower_bound_trace.last().unwrap(), c.lower_bound_trace.last().unwrap());
    assert!((la - lc).abs() < 1e-4 * la.abs(), "{la} vs {lc}");
}
