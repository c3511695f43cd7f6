use approx::assert_relative_eq;
use proptest::prelude::*;
use seroprev::bootstrap::{bca_from_sample, percentile_from_sample};
use seroprev::exact::exact_p_values;
use seroprev::*;

fn counts() -> impl Strategy<Value = SurveyCounts> {
    (1u64..60, 1u64..60, 1u64..60)
        .prop_flat_map(|(n1, n2, n3)| (0..=n1, 0..=n2, 0..=n3, Just([n1, n2, n3])))
        .prop_map(|(a, b, c, n)| SurveyCounts::from_arrays([a, b, c], n).unwrap())
}

/// Points of the model space away from its boundary.
fn interior_point() -> impl Strategy<Value = [f64; 3]> {
    (0.01f64..0.99, 0.01f64..0.99, 0.0f64..1.0).prop_map(|(a, b, t)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let hi = if hi - lo < 1e-3 { (lo + 1e-3).min(0.995) } else { hi };
        [lo + t * (hi - lo), lo, hi]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unconstrained_mle_beats_grid(x in counts()) {
        let m = mle_unconstrained(&x);
        prop_assert!(m.p_hat[1] <= m.p_hat[0] && m.p_hat[0] <= m.p_hat[2]);
        let k = 24;
        for i in 0..=k {
            for j in i..=k {
                for l in j..=k {
                    let p = [j as f64 / k as f64, i as f64 / k as f64, l as f64 / k as f64];
                    prop_assert!(log_likelihood(p, &x) <= m.log_lik + 1e-9);
                }
            }
        }
    }

    #[test]
    fn constrained_mle_beats_feasible_points(x in counts(), pi0 in 0.0f64..=1.0, pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 50)) {
        let c = mle_constrained(&x, pi0).unwrap();
        let [p1, p2, p3] = c.p_hat;
        prop_assert!((p1 - ((1.0 - pi0) * p2 + pi0 * p3)).abs() < 1e-9);
        prop_assert!(p2 <= p3 + 1e-12);
        for (u, v) in pts {
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            let q = [(1.0 - pi0) * a + pi0 * b, a, b];
            prop_assert!(log_likelihood(q, &x) <= c.log_lik + 1e-7, "{:?} beats {:?}", q, c.p_hat);
        }
        prop_assert!(c.log_lik <= mle_unconstrained(&x).log_lik + 1e-9);
    }

    #[test]
    fn signed_root_squares_to_lr(x in counts(), pi0 in 0.0f64..=1.0) {
        let w = evaluate_statistic(StatisticKind::W, &x, pi0, None).unwrap();
        let r = evaluate_statistic(StatisticKind::R, &x, pi0, None).unwrap();
        if w.defined && r.defined {
            prop_assert!((r.value * r.value - w.value).abs() <= 1e-10 * w.value.max(1.0));
            if let (Some(pi_hat), true) = (mle_unconstrained(&x).prevalence(), r.value != 0.0) {
                prop_assert_eq!(r.value > 0.0, pi_hat > pi0);
            }
        }
    }

    #[test]
    fn delta_variance_matches_numeric_gradient(p in interior_point(), n in (10u64..5000, 10u64..5000, 10u64..5000)) {
        let sizes = SampleSizes::new(n.0, n.1, n.2).unwrap();
        let v = delta_variance(ParamPoint::from_array(p).unwrap(), sizes).value;
        let f = |q: [f64; 3]| (q[0] - q[1]) / (q[2] - q[1]);
        let nn = sizes.as_f64();
        let mut oracle = 0.0;
        for i in 0..3 {
            let h = 1e-6;
            let (mut up, mut dn) = (p, p);
            up[i] += h;
            dn[i] -= h;
            let g = (f(up) - f(dn)) / (2.0 * h);
            oracle += g * g * p[i] * (1.0 - p[i]) / nn[i];
        }
        assert_relative_eq!(v, oracle, max_relative = 1e-6);
    }

    #[test]
    fn delta_interval_contains_estimate(x in counts()) {
        if let Ok(ci) = delta_interval(&x, 0.05) {
            let pi = mle_unconstrained(&x).prevalence().unwrap();
            prop_assert!(ci.lower <= pi && pi <= ci.upper);
            prop_assert!(0.0 <= ci.lower && ci.upper <= 1.0);
        }
    }

    #[test]
    fn projection_contains_delta_estimate(x in counts()) {
        let m = mle_unconstrained(&x);
        if m.case == MleCase::Interior && m.p_hat[1] < m.p_hat[2] {
            let ci = projection_interval(&x, 0.05).unwrap();
            prop_assert!(ci.contains(m.prevalence().unwrap()));
        }
    }

    #[test]
    fn bca_with_zero_constants_is_percentile(x in counts(), seed in any::<u64>()) {
        let m = mle_unconstrained(&x);
        let s = bootstrap_distribution(StatisticKind::PiHat, m.p_hat, x.sizes(), None, 199, RngSeed::new(seed)).unwrap();
        let zero = BcaConstants { z0: 0.0, a: 0.0 };
        let (b, p) = (bca_from_sample(&s, zero, 0.05), percentile_from_sample(&s, 0.05));
        match (b, p) {
            (Ok(b), Ok(p)) => {
                prop_assert_eq!(b.lower.to_bits(), p.lower.to_bits());
                prop_assert_eq!(b.upper.to_bits(), p.upper.to_bits());
            }
            (b, p) => prop_assert_eq!(b.is_ok(), p.is_ok()),
        }
    }

    #[test]
    fn corrected_p_values_dominate_lattice(x in counts(), pi0 in 0.0f64..=1.0) {
        let c = exact_p_values(&x, pi0, 0.01, 4, 1e-10, true).unwrap();
        let u = exact_p_values(&x, pi0, 0.01, 4, 1e-10, false).unwrap();
        prop_assert!(c.q_lower >= u.q_lower && c.q_upper >= u.q_upper);
        prop_assert!(c.q_lower <= 1.0 && c.q_upper <= 1.0);
    }

    #[test]
    fn clopper_pearson_nests(x in 0u64..40, extra in 0u64..40) {
        let n = x + extra + 1;
        let wide = clopper_pearson(x, n, 0.99, Side::TwoSided).unwrap();
        let narrow = clopper_pearson(x, n, 0.9, Side::TwoSided).unwrap();
        prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        let f = x as f64 / n as f64;
        prop_assert!(narrow.lower <= f && f <= narrow.upper);
    }
}

#[test]
fn coverage_is_thread_count_invariant() {
    let x = SurveyCounts::from_arrays([50, 2, 103], [3300, 401, 122]).unwrap();
    let methods = vec![
        MethodSpec::new(Method::Delta),
        MethodSpec::new(Method::Bca),
        MethodSpec::inversion(Method::InversionBootstrap, StatisticKind::PhiTildeC),
    ];
    let mut cfg = ExperimentConfig::at_observed(&x, methods);
    cfg.reps = 40;
    cfg.settings.b = 99;
    cfg.seed = 2024;
    cfg.threads = Some(1);
    let one = run_coverage(&cfg).unwrap();
    cfg.threads = Some(4);
    let four = run_coverage(&cfg).unwrap();
    assert_eq!(one, four);
}

#[test]
fn doubling_reps_is_consistent() {
    let x = SurveyCounts::from_arrays([50, 2, 103], [3300, 401, 122]).unwrap();
    let mut cfg = ExperimentConfig::at_observed(&x, vec![MethodSpec::new(Method::Delta)]);
    cfg.reps = 4000;
    let a = run_coverage(&cfg).unwrap().rows[0].clone();
    cfg.reps = 8000;
    let b = run_coverage(&cfg).unwrap().rows[0].clone();
    // replicates are indexed streams, so the first 4000 are shared
    assert!(b.n_covered >= a.n_covered && b.n_covered <= a.n_covered + 4000);
    assert!((a.covered_rate() - b.covered_rate()).abs() < 4.0 * a.covered_se());
}
