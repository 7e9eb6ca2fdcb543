use loadgan_core::cluster::{kmeans_seeded, silhouette};
use loadgan_core::features::{extract_features, normalize_segment};
use loadgan_core::gan::{denormalize_value, normalize_value};
use loadgan_core::metrics::{cluster_js, frechet_distance, js_divergence, FidStats};
use loadgan_core::pipeline::{apportion, round_robin_order};
use loadgan_core::resample::{choose_factor, downsample, reconstruct};
use loadgan_core::router::{classify, RoutingConfig, RoutingStats};
use loadgan_core::seed::derive_seed;
use loadgan_core::trace::{read_csv, write_csv, DeviceTrace, DeviceTraceSet, MissingPolicy};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x10ad),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), -1e-3..1e-3f64]
}

fn trace_set(cols: Vec<Vec<f64>>) -> DeviceTraceSet {
    let traces = cols
        .into_iter()
        .enumerate()
        .map(|(i, c)| DeviceTrace::new(format!("dev{i}"), c).unwrap())
        .collect();
    DeviceTraceSet::new(traces).unwrap()
}

fn csv_cycle(set: &DeviceTraceSet) -> DeviceTraceSet {
    let mut buf = Vec::new();
    write_csv(&mut buf, set).unwrap();
    read_csv(buf.as_slice(), MissingPolicy::Zero).unwrap()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn csv_round_trip_is_exact_for_emitted_decimals(
        cols in prop::collection::vec(prop::collection::vec((-99_999_999i64..99_999_999, 0i32..7), 12), 1..5),
    ) {
        let set = trace_set(
            cols.iter()
                .map(|c| c.iter().map(|&(m, e)| format!("{m}e-{e}").parse().unwrap()).collect())
                .collect(),
        );
        prop_assert_eq!(csv_cycle(&set), set);
    }

    #[test]
    fn csv_cycle_is_idempotent_and_close(cols in prop::collection::vec(prop::collection::vec(finite(), 12), 1..5)) {
        let set = trace_set(cols);
        let once = csv_cycle(&set);
        prop_assert_eq!(&csv_cycle(&once), &once);
        for (a, b) in set.iter().zip(once.iter()) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((x - y).abs() <= 5e-9 * x.abs().max(1e-300), "{x} -> {y}");
            }
        }
    }

    #[test]
    fn block_constant_series_round_trip(values in prop::collection::vec(finite(), 1..40), f in 1usize..16) {
        let x: Vec<f64> = values.iter().flat_map(|&v| std::iter::repeat_n(v, f)).collect();
        let s = downsample(&x, f).unwrap();
        prop_assert_eq!(&s.values, &values);
        prop_assert_eq!(reconstruct(&s.values, f, x.len()).unwrap(), x);
    }

    #[test]
    fn reconstruct_has_requested_length(n in 1usize..100, f in 1usize..30, t in 1usize..4000) {
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        prop_assert_eq!(reconstruct(&y, f, t).unwrap().len(), t);
    }

    #[test]
    fn chosen_factor_is_minimal(t in 1usize..5_000_000, u in 1usize..5000) {
        let f = choose_factor(t, u);
        prop_assert!(t / f <= u);
        prop_assert!(f == 1 || t / (f - 1) > u);
    }

    #[test]
    fn features_ignore_positive_affine_maps(
        x in prop::collection::vec(0.0..1000.0f64, 16..80),
        a in 0.5..20.0f64,
        b in -100.0..100.0f64,
    ) {
        let n = normalize_segment(&x);
        prop_assume!(n.std > 1e-3);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let m = normalize_segment(&y);
        for (p, q) in n.values.iter().zip(&m.values) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
        }
        let fx = extract_features(&n).unwrap();
        let fy = extract_features(&m).unwrap();
        // Frequency and extremum counts can flip on near-ties; every
        // continuous feature must agree.
        for i in (0..5).chain(8..fx.0.len()) {
            prop_assert!((fx.0[i] - fy.0[i]).abs() <= 1e-6, "feature {i}: {} vs {}", fx.0[i], fy.0[i]);
        }
    }

    #[test]
    fn r0_or_steady_occupancy_routes_continuous(
        r0 in any::<bool>(),
        p in 0.0..=1.0f64,
        var in 0.0..10.0f64,
        dp in 0.0..0.3f64,
    ) {
        let cfg = RoutingConfig::default();
        let s = RoutingStats { r0, p_nz: p, var_smoothed_diff: var };
        let class = classify(&s, &cfg);
        let expect_cont = r0 || (p > 0.7 && var < 0.1);
        prop_assert_eq!(class == loadgan_core::router::DeviceClass::Continuous, expect_cont);
        // Raising occupancy never turns a continuous device intermittent.
        let more = RoutingStats { p_nz: (p + dp).min(1.0), ..s };
        if expect_cont {
            prop_assert_eq!(classify(&more, &cfg), class);
        }
    }

    #[test]
    fn js_is_symmetric_and_bounded(p in prop::collection::vec(0usize..50, 1..10), q in prop::collection::vec(0usize..50, 1..10)) {
        let k = p.len().min(q.len());
        let (p, q) = (&p[..k], &q[..k]);
        prop_assume!(p.iter().sum::<usize>() > 0 && q.iter().sum::<usize>() > 0);
        let a = cluster_js(p, q).unwrap();
        let b = cluster_js(q, p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(cluster_js(p, p).unwrap(), 0.0);
    }

    #[test]
    fn kmeans_inertia_never_rises(
        pts in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 12..40),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let c = kmeans_seeded(&pts, k, 300, 1e-4, seed).unwrap();
        for w in c.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", c.inertia_history);
        }
        prop_assert!((c.inertia - c.inertia_history.last().unwrap()).abs() <= 1e-9 * (1.0 + c.inertia));
        for (p, &a) in pts.iter().zip(&c.assignments) {
            let d = |j: usize| p.iter().zip(&c.centroids[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!((0..k).all(|j| d(a) <= d(j) + 1e-9));
        }
    }

    #[test]
    fn silhouette_is_bounded(
        pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 6..30),
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = (0..pts.len()).map(|i| if i < 2 { i } else { (seed as usize >> (i % 60)) % 3 }).collect();
        let s = silhouette(&pts, &labels).unwrap();
        prop_assert!(s.per_point.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!((-1.0..=1.0).contains(&s.mean));
    }

    #[test]
    fn univariate_fid_matches_closed_form(
        r in prop::collection::vec(-100.0..100.0f64, 2..60),
        g in prop::collection::vec(-100.0..100.0f64, 2..60),
    ) {
        let moments = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
        };
        let ((mr, sr), (mg, sg)) = (moments(&r), moments(&g));
        let wrap = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let got = frechet_distance(&FidStats::fit(&wrap(&r)).unwrap(), &FidStats::fit(&wrap(&g)).unwrap()).unwrap();
        let want = (mr - mg).powi(2) + (sr - sg).powi(2);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want), "{got} vs {want}");
    }

    #[test]
    fn min_max_scaling_round_trips(v in -1e5..1e5f64, lo in -1e4..1e4f64, width in 1e-3..1e5f64) {
        let range = (lo, lo + width);
        let y = normalize_value(v, range);
        prop_assert!((denormalize_value(y, range) - v).abs() <= 1e-9 * (1.0 + v.abs() + width));
        if (range.0..=range.1).contains(&v) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&y));
        }
    }

    #[test]
    fn apportion_preserves_total_and_presence(sizes in prop::collection::vec(0usize..40, 1..8), total in 0usize..300) {
        let got = apportion(&sizes, total);
        let nonempty = sizes.iter().filter(|&&s| s > 0).count();
        if nonempty == 0 {
            prop_assert!(got.iter().all(|&g| g == 0));
        } else {
            prop_assert_eq!(got.iter().sum::<usize>(), total);
            prop_assert!(got.iter().zip(&sizes).all(|(&g, &s)| s > 0 || g == 0));
            if total >= nonempty {
                prop_assert!(got.iter().zip(&sizes).all(|(&g, &s)| s == 0 || g >= 1));
            }
        }
        let order = round_robin_order(&got);
        for (c, &n) in got.iter().enumerate() {
            prop_assert_eq!(order.iter().filter(|&&o| o == c).count(), n);
        }
    }

    #[test]
    fn derived_seeds_are_pure(g in any::<u64>(), dev in "[a-z]{1,8}", idx in 0u64..100) {
        let a = derive_seed(g, &dev, "cluster", idx);
        prop_assert_eq!(a, derive_seed(g, &dev, "cluster", idx));
        prop_assert_ne!(a, derive_seed(g, &dev, "cluster", idx + 1));
    }
}

#[test]
fn js_of_disjoint_distributions_is_one() {
    assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
}
