use proptest::prelude::*;

use lossy_tcn::bottleneck::{compress, decompress, CodingTables, FactorizedDensity, PmfTable};
use lossy_tcn::detection::{confidence_series, detect_window, one_shot, subset_means};
use lossy_tcn::numerics::ops::{causal_conv1d, causal_transposed_conv1d};
use lossy_tcn::numerics::{ParamStore, RngState, Tensor};
use lossy_tcn::training::ChannelNormalizer;

fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_pair_is_adjoint(seed in any::<u64>(), ci in 1usize..4, co in 1usize..4, k in 1usize..4, d in 1usize..5, t in 1usize..20) {
        let mut rng = RngState::new(seed);
        let w = random_tensor(&[co, ci, k], &mut rng);
        let a = random_tensor(&[ci, t], &mut rng);
        let b = random_tensor(&[co, t], &mut rng);
        let lhs = causal_conv1d(&a, &w, &Tensor::zeros(&[co]), d).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&causal_transposed_conv1d(&b, &w, &Tensor::zeros(&[ci]), d).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn conv_is_causal(seed in any::<u64>(), k in 1usize..4, d in 1usize..5, t in 2usize..24, at in 0usize..24, bump in -5.0f64..5.0) {
        let at = at % t;
        let mut rng = RngState::new(seed);
        let w = random_tensor(&[3, 2, k], &mut rng);
        let b = random_tensor(&[3], &mut rng);
        let x = random_tensor(&[2, t], &mut rng);
        let mut y = x.clone();
        y.data_mut()[at] += bump;
        let ox = causal_conv1d(&x, &w, &b, d).unwrap();
        let oy = causal_conv1d(&y, &w, &b, d).unwrap();
        for c in 0..3 {
            prop_assert_eq!(&ox.row(c)[..at], &oy.row(c)[..at]);
        }
    }

    #[test]
    fn coder_round_trips_with_escapes(seed in any::<u64>(), dims in 1usize..6, windows in 1usize..40) {
        let mut rng = RngState::new(seed);
        let tables = (0..dims).map(|_| {
            let n = 1 + rng.below(12);
            let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let s: f64 = raw.iter().sum::<f64>() * 1.05;
            PmfTable::from_probabilities(rng.below(9) as i64 - 4, &raw.iter().map(|p| p / s).collect::<Vec<_>>()).unwrap()
        }).collect();
        let tables = CodingTables::new(tables).unwrap();
        for _ in 0..windows {
            let symbols: Vec<i64> = (0..dims).map(|_| {
                if rng.uniform() < 0.1 { (rng.normal() * 1e6) as i64 } else { rng.below(17) as i64 - 8 }
            }).collect();
            let stream = compress(&symbols, &tables).unwrap();
            prop_assert_eq!(decompress(&stream, &tables).unwrap(), symbols);
        }
    }

    #[test]
    fn pmf_frequencies_fill_the_range(seed in any::<u64>(), n in 1usize..300) {
        let mut rng = RngState::new(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform().powi(4)).collect();
        let s: f64 = raw.iter().sum();
        let t = PmfTable::from_probabilities(0, &raw.iter().map(|p| p / s).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(t.freqs.iter().map(|&f| u64::from(f)).sum::<u64>(), 1u64 << 16);
        prop_assert!(t.freqs.iter().all(|&f| f >= 1));
    }

    #[test]
    fn density_cdf_is_monotone(seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let density = FactorizedDensity::new(&mut store, "d", 3, &[3, 3, 3], 1e-9, &mut rng).unwrap();
        for p in store.iter_mut() {
            for v in p.value.data_mut() {
                *v += rng.normal();
            }
        }
        for dim in 0..3 {
            let mut prev = 0.0;
            for i in 0..1000 {
                let u = -30.0 + 60.0 * i as f64 / 999.0;
                let c = density.cumulative(&store, u, dim);
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!(c >= prev, "dim {} at {}: {} < {}", dim, u, c, prev);
                prev = c;
            }
        }
        let z: Vec<f64> = (0..3).map(|_| (rng.normal() * 10.0).round()).collect();
        prop_assert!(density.likelihood(&store, &z).unwrap().iter().all(|&p| p >= 1e-9));
        prop_assert!(density.rate_bits(&store, &z).unwrap() >= 0.0);
    }

    #[test]
    fn raising_delta_never_flags_more(means in prop::collection::vec(0.0f64..5.0, 1..50), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let count = |d| one_shot(&means, d).iter().map(|&v| v as usize).sum::<usize>();
        prop_assert!(count(hi) <= count(lo));
    }

    #[test]
    fn confidence_stays_in_unit_interval(
        t in 1usize..30,
        votes in prop::collection::vec(prop::collection::vec(0u8..2, 30), 0..60),
        limit in 0.01f64..1.0,
    ) {
        let votes: Vec<Vec<u8>> = votes.into_iter().map(|v| v[..t].to_vec()).collect();
        let pts = confidence_series(&votes, t, limit).unwrap();
        let expected = if votes.is_empty() { 0 } else { votes.len() + t - 1 };
        prop_assert_eq!(pts.len(), expected);
        for (i, p) in pts.iter().enumerate() {
            prop_assert_eq!(p.t, i);
            prop_assert!((0.0..=1.0).contains(&p.cs));
            prop_assert!(p.windows >= 1 && p.votes <= p.windows);
        }
        if let Some(first) = pts.first() {
            // a single covering window: CS is that window's own decision
            prop_assert_eq!(first.windows, 1);
            prop_assert_eq!(first.zeta, votes[0][0]);
        }
    }

    #[test]
    fn scaling_omega_against_residuals_keeps_decisions(seed in any::<u64>(), exp in -8i32..8, delta in 0.1f64..3.0) {
        // power-of-two scale factors keep every product exact
        let c = 2f64.powi(exp);
        let mut rng = RngState::new(seed);
        let x = random_tensor(&[3, 40], &mut rng);
        let x_hat = random_tensor(&[3, 40], &mut rng);
        let omega: Vec<f64> = (0..3).map(|_| 0.1 + rng.uniform()).collect();
        let base = detect_window(&x, &x_hat, &omega, delta).unwrap();
        let xs = x.map(|v| v / c);
        let xhs = x_hat.map(|v| v / c);
        let os: Vec<f64> = omega.iter().map(|o| o * c).collect();
        let scaled = detect_window(&xs, &xhs, &os, delta).unwrap();
        prop_assert_eq!(base.decisions, scaled.decisions);
    }

    #[test]
    fn scaling_by_any_factor_only_moves_boundary_subsets(seed in any::<u64>(), c in 0.01f64..100.0, delta in 0.1f64..3.0) {
        let mut rng = RngState::new(seed);
        let x = random_tensor(&[3, 40], &mut rng);
        let x_hat = random_tensor(&[3, 40], &mut rng);
        let omega: Vec<f64> = (0..3).map(|_| 0.1 + rng.uniform()).collect();
        let base = detect_window(&x, &x_hat, &omega, delta).unwrap();
        let scaled = detect_window(
            &x.map(|v| v / c),
            &x_hat.map(|v| v / c),
            &omega.iter().map(|o| o * c).collect::<Vec<_>>(),
            delta,
        ).unwrap();
        for (k, m) in base.means.iter().enumerate() {
            if (m - delta).abs() > 1e-9 {
                prop_assert_eq!(base.decisions[k], scaled.decisions[k]);
            }
        }
    }

    #[test]
    fn subset_means_partition_the_window(mae in prop::collection::vec(0.0f64..10.0, 1..8)) {
        let k = mae.len();
        let full: Vec<f64> = mae.iter().flat_map(|&v| std::iter::repeat_n(v, 10)).collect();
        let means = subset_means(&full).unwrap();
        prop_assert_eq!(means.len(), k);
        for (m, v) in means.iter().zip(&mae) {
            prop_assert!((m - v).abs() <= 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn omega_stays_positive(seed in any::<u64>(), batches in 1usize..10, scale in prop::sample::select(vec![0.0, 1e-12, 1.0, 1e6])) {
        let mut rng = RngState::new(seed);
        let mut n = ChannelNormalizer::new(4, 0.99);
        for _ in 0..batches {
            let r: Vec<Tensor> = (0..3).map(|_| random_tensor(&[4, 20], &mut rng).map(|v| v * scale)).collect();
            let omega = n.update(&r).unwrap();
            prop_assert!(omega.iter().all(|w| w.is_finite() && *w > 0.0));
        }
    }
}
