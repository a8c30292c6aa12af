use nlconsensus::graph::DiGraph;
use nlconsensus::metrics::{empirical_rate, lambda_min_neg_a, theoretical_speed_fixed};
use nlconsensus::synthesis::{design_companion, rank_one_gain};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_exponential_rates(
        rho in prop::sample::select(vec![0.1, 1.0, 10.0]),
        scale in 0.01..100.0f64,
    ) {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let series: Vec<f64> = times.iter().map(|t| scale * (-rho * t).exp()).collect();
        let fit = empirical_rate(&times, &series, None).unwrap();
        prop_assert!((fit.rate - rho).abs() <= 1e-6 * rho);
        prop_assert!((fit.intercept - scale.ln()).abs() <= 1e-6 * scale.ln().abs().max(1.0));
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn predicted_speed_is_monotone_in_mu(mu in 0.01..5.0f64, step in 0.01..5.0f64, n in 2usize..7) {
        let cs = design_companion(&[Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]).unwrap();
        let g = DiGraph::directed_cycle(n).unwrap();
        let lo = theoretical_speed_fixed(&cs, &rank_one_gain(&cs, mu, 1.0, 1.0).unwrap(), &g).unwrap();
        let hi = theoretical_speed_fixed(&cs, &rank_one_gain(&cs, mu + step, 1.0, 1.0).unwrap(), &g).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!(hi <= lambda_min_neg_a(&cs) + 1e-15);
    }
}
