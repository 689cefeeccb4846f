use ftcost::batch_model::{predict_max_batch, BatchCoeffs};
use ftcost::catalog::{Catalog, DatasetSpec, GpuSpec, ProfileSample};
use ftcost::cost_model::{scale_by_dataset, CostEstimate};
use ftcost::router_sim::{expert_load, route_topk, RouterInput};
use ftcost::synth_workload::{simulate_throughput, RooflineParams};
use ftcost::throughput_model::{fit_throughput, ThroughputForm};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = BatchCoeffs> {
    (0.5f64..200.0, 0.0f64..=1.0).prop_map(|(c0, c1)| BatchCoeffs { c0, c1 })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn batch_grows_with_gpu_memory(c in coeffs(), model in 1.0f64..60.0, extra in 0.0f64..100.0,
                                   bump in 0.0f64..50.0, seq in 16u32..2048, s in 0.01f64..=1.0) {
        let small = predict_max_batch(&c, model + extra, model, seq, s).unwrap();
        let large = predict_max_batch(&c, model + extra + bump, model, seq, s).unwrap();
        prop_assert!(large >= small);
    }

    #[test]
    fn batch_shrinks_with_sequence_and_sparsity(c in coeffs(), gpu in 20.0f64..160.0, model in 1.0f64..20.0,
                                                seq in 16u32..2048, s in 0.01f64..0.99) {
        let base = predict_max_batch(&c, gpu, model, seq, s).unwrap();
        prop_assert!(predict_max_batch(&c, gpu, model, seq * 2, s).unwrap() <= base);
        prop_assert!(predict_max_batch(&c, gpu, model, seq, (s + 0.01).min(1.0)).unwrap() <= base);
    }

    #[test]
    fn sparse_to_dense_ratio(c in coeffs(), gpu in 20.0f64..160.0, model in 1.0f64..20.0,
                             seq in 16u32..2048, s in 0.01f64..=1.0) {
        let sparse = c.raw_batch(gpu, model, seq, s);
        let dense = c.raw_batch(gpu, model, seq, 1.0);
        let expected = 1.0 / ((1.0 - c.c1) + c.c1 * s);
        prop_assert!((sparse / dense - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn power_fit_c3_invariant_under_scaling(c2 in 0.1f64..3.0, c3 in 0.1f64..1.5, c4 in 0.5f64..3.0,
                                            alpha in 0.1f64..10.0) {
        let samples = |scale: f64| -> Vec<ProfileSample> {
            [1u64, 2, 4, 8, 16].iter().flat_map(|&b| [0.25, 0.5, 1.0].map(move |s| ProfileSample {
                gpu: "g".into(),
                model: "m".into(),
                dataset: "d".into(),
                sparsity: s,
                batch_size: b,
                throughput_qps: scale * (c2 * (b as f64 / s.powf(c3)).ln() + c4),
            })).collect()
        };
        let base = fit_throughput(&samples(1.0), ThroughputForm::Power).unwrap();
        let scaled = fit_throughput(&samples(alpha), ThroughputForm::Power).unwrap();
        prop_assert!((base.coeffs.c3 - scaled.coeffs.c3).abs() < 1e-8);
        prop_assert!((scaled.coeffs.c2 - alpha * base.coeffs.c2).abs() < 1e-8 * alpha.max(1.0));
    }

    #[test]
    fn routing_commutes_with_expert_permutation(
        rows in prop::collection::vec(prop::collection::vec(-100i32..100, 5), 1..12),
        perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
        k in 1usize..=5,
    ) {
        // Distinct logits per row, so the selected set does not depend on tie-breaking.
        let logits: Vec<Vec<f64>> = rows.iter()
            .map(|r| r.iter().enumerate().map(|(i, &v)| v as f64 * 8.0 + i as f64).collect())
            .collect();
        let permuted: Vec<Vec<f64>> = logits.iter()
            .map(|r| (0..5).map(|j| r[perm[j]]).collect())
            .collect();
        let a = route_topk(&RouterInput::new(logits, k).unwrap());
        let b = route_topk(&RouterInput::new(permuted, k).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            let mapped: Vec<usize> = rb.experts.iter().map(|&j| perm[j]).collect();
            prop_assert_eq!(&mapped, &ra.experts);
            for (wa, wb) in ra.weights.iter().zip(&rb.weights) {
                prop_assert!((wa - wb).abs() < 1e-12);
            }
        }
        let la = expert_load(&a, 5).unwrap();
        let lb = expert_load(&b, 5).unwrap();
        prop_assert!((la.variance_pct - lb.variance_pct).abs() < 1e-9);
    }

    #[test]
    fn softmax_weights_ignore_row_shift(
        rows in prop::collection::vec(prop::collection::vec(-64i32..64, 6), 1..10),
        shift in -1000i32..1000,
        k in 1usize..=6,
    ) {
        let logits: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64 / 4.0).collect()).collect();
        let shifted: Vec<Vec<f64>> = logits.iter().map(|r| r.iter().map(|v| v + shift as f64).collect()).collect();
        let a = route_topk(&RouterInput::new(logits, k).unwrap());
        let b = route_topk(&RouterInput::new(shifted, k).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            prop_assert_eq!(&ra.experts, &rb.experts);
            for (wa, wb) in ra.weights.iter().zip(&rb.weights) {
                prop_assert!((wa - wb).abs() < 1e-12);
            }
            if k == 6 {
                prop_assert!((ra.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loads_conserve_assignments(tokens in 1usize..200, experts in 1usize..16, seed in any::<u64>(),
                                  k_frac in 0.0f64..1.0) {
        let k = 1 + ((experts - 1) as f64 * k_frac) as usize;
        let logits = ftcost::router_sim::random_logits(tokens, experts, seed);
        let load = expert_load(&route_topk(&RouterInput::new(logits, k).unwrap()), experts).unwrap();
        prop_assert_eq!(load.counts.iter().sum::<u64>(), (tokens * k) as u64);
        prop_assert!((load.shares_pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        prop_assert!(load.imbalance_factor >= 1.0 - 1e-12);
    }

    #[test]
    fn catalog_round_trips(mem in 1.0f64..200.0, price in prop::option::of(0.01f64..50.0),
                           queries in 1u64..10_000_000, seq in 1u32..8192, name in "[A-Za-z0-9-]{1,12}") {
        let cat = Catalog {
            gpus: vec![GpuSpec {
                name: name.clone(),
                memory_gib: mem,
                hourly_price_usd: price,
                peak_compute_tflops: None,
                mem_bandwidth_gbs: None,
            }],
            datasets: vec![DatasetSpec { name, num_queries: queries, median_seq_len: seq, task_tag: "t".into() }],
            ..Catalog::default()
        };
        let text = cat.to_json_string();
        let back = Catalog::from_json_str(&text).unwrap();
        prop_assert_eq!(&back, &cat);
        prop_assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn cost_is_linear_in_queries(mbs in 1u64..64, qps in 0.01f64..100.0, price in 0.01f64..10.0,
                                 n in 1u64..1_000_000, m in 1u64..1_000_000) {
        let base = CostEstimate::from_parts(mbs, qps, price, n);
        let direct = CostEstimate::from_parts(mbs, qps, price, m);
        let scaled = scale_by_dataset(&base, n, m).unwrap();
        prop_assert!((scaled.total_usd - direct.total_usd).abs() <= 1e-9 * direct.total_usd);
        prop_assert!((scaled.wall_seconds - direct.wall_seconds).abs() <= 1e-9 * direct.wall_seconds);
    }

    #[test]
    fn sparser_routing_never_slows_synth(b in 1u64..4096, s in 0.01f64..1.0, ds in 0.0f64..1.0) {
        let p = RooflineParams::default();
        let denser = (s + ds * (1.0 - s)).min(1.0);
        prop_assert!(simulate_throughput(&p, b, s).unwrap() >= simulate_throughput(&p, b, denser).unwrap());
    }

    #[test]
    fn synth_throughput_grows_with_batch(b in 1u64..4096, s in 0.01f64..=1.0) {
        let p = RooflineParams::default();
        let (cur, next) = (simulate_throughput(&p, b, s).unwrap(), simulate_throughput(&p, b + 1, s).unwrap());
        prop_assert!(next >= cur * (1.0 - 1e-12));
        prop_assert!(simulate_throughput(&p, b, s).unwrap() <= p.throughput_ceiling(s) * (1.0 + 1e-12));
    }
}
