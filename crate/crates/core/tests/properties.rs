//! Invariants that must hold for any input, checked on random instances.

use ndarray::{Array1, Array2, ArrayView2};
use proptest::prelude::*;
use subtrack::fedcore::{partition_columns, required_iterations, Channel, PartitionMode};
use subtrack::fedrst::{concat_columns, fed_bound};
use subtrack::harness::Table;
use subtrack::linalg::{dist, projected_ls_fill, qr_orthonormalize, r_svd, Basis};
use subtrack::oracle;
use subtrack::rng;

fn basis(n: usize, r: usize, seed: u64) -> Basis {
    let g = rng::gaussian_matrix(&mut rng::stream(seed, "prop-basis", 0), n, r);
    qr_orthonormalize(g.view()).unwrap().0
}

fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    (&a - &b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dist_is_a_symmetric_sine(n in 2usize..24, seed in any::<u64>(), r_frac in 0.0f64..1.0) {
        let r = 1 + ((n - 1) as f64 * r_frac) as usize;
        let (a, b) = (basis(n, r, seed), basis(n, r, seed ^ 0x5eed));
        let ab = dist(&a, &b).unwrap();
        let ba = dist(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(dist(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn dist_ignores_the_choice_of_basis(n in 3usize..20, seed in any::<u64>()) {
        let r = n / 2;
        let (a, b) = (basis(n, r, seed), basis(n, r, seed.wrapping_add(1)));
        let q = basis(r, r, seed.wrapping_add(2));
        let rotated = Basis::new(a.view().dot(&q.view())).unwrap();
        prop_assert!((dist(&a, &b).unwrap() - dist(&rotated, &b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn r_svd_is_orthonormal_sorted_and_matches_jacobi(rows in 1usize..14, cols in 1usize..14, seed in any::<u64>()) {
        let m = rng::gaussian_matrix(&mut rng::stream(seed, "prop-svd", 0), rows, cols);
        let r = rows.min(cols);
        let svd = r_svd(m.view(), r).unwrap();
        prop_assert!(svd.basis.orthonormality_error() <= 1e-12);
        prop_assert!(svd.singular_values.windows(2).into_iter().all(|w| w[0] >= w[1]));
        let (_, s) = oracle::jacobi_svd(m.view(), r);
        for (a, b) in svd.singular_values.iter().zip(s.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * s[0].max(1.0));
        }
    }

    #[test]
    fn projected_ls_restores_columns_in_the_span(n in 8usize..40, seed in any::<u64>(), k in 0usize..4) {
        let r = 2;
        let p = basis(n, r, seed);
        let mut st = rng::stream(seed, "prop-ls", 0);
        let a = Array1::from_shape_fn(r, |_| rng::standard_normal(&mut st));
        let l = p.view().dot(&a);
        let missing: Vec<usize> = (0..k.min(n - r - 1)).map(|i| (i * 7 + 3) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let mut y = l.clone();
        for &i in &missing {
            y[i] = 0.0;
        }
        let filled = projected_ls_fill(&p, y.view(), &missing).unwrap();
        let err = (&filled - &l).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err <= 1e-9, "error {err}");
    }

    #[test]
    fn even_partitions_tile_the_columns(d in 1usize..200, k_frac in 0.0f64..1.0) {
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let topo = partition_columns(d, k, &PartitionMode::Even).unwrap();
        prop_assert_eq!(topo.nodes(), k);
        prop_assert_eq!(topo.ranges[0].start, 0);
        prop_assert_eq!(topo.columns(), d);
        prop_assert!(topo.ranges.windows(2).all(|w| w[0].end == w[1].start));
        let sizes = topo.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn splitting_and_concatenating_is_the_identity(n in 1usize..10, d in 1usize..30, seed in any::<u64>()) {
        let m = rng::gaussian_matrix(&mut rng::stream(seed, "prop-concat", 0), n, d);
        let topo = partition_columns(d, 1 + d / 4, &PartitionMode::Even).unwrap();
        let blocks: Vec<ArrayView2<f64>> = topo.ranges.iter().map(|rg| m.slice(ndarray::s![.., rg.clone()])).collect();
        prop_assert_eq!(concat_columns(&blocks), m);
    }

    #[test]
    fn a_silent_channel_sums_exactly(k in 1usize..6, seed in any::<u64>()) {
        let mut st = rng::stream(seed, "prop-channel", 0);
        let parts: Vec<Array2<f64>> = (0..k).map(|_| rng::gaussian_matrix(&mut st, 5, 3)).collect();
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
        let mut channel = Channel::new(0.0, seed).unwrap();
        let got = channel.transmit(&views).unwrap();
        let mut want = Array2::zeros((5, 3));
        for p in &parts {
            want += p;
        }
        prop_assert!(max_abs_diff(got.view(), want.view()) <= 1e-12);
        prop_assert_eq!(channel.transmissions(), 1);
    }

    #[test]
    fn the_federated_bound_decays_to_its_floor(eps_init in 0.0f64..1.0, delta in 0.0f64..0.1, floor in 0.0f64..0.1) {
        let mut prev = f64::INFINITY;
        for t in 1..40 {
            let b = fed_bound(t, eps_init, delta, floor);
            prop_assert!(b <= prev && b >= floor && b >= 0.5 * delta);
            prev = b;
        }
    }

    #[test]
    fn more_iterations_for_a_smaller_gap(r1 in 0.01f64..0.98, r2 in 0.01f64..0.98, eps in 0.001f64..0.3) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = required_iterations(lo, eps, None, 100, 5, 2.0).unwrap();
        let b = required_iterations(hi, eps, None, 100, 5, 2.0).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn tables_round_trip_through_csv(values in prop::collection::vec(prop::option::of(-1e300f64..1e300), 1..30)) {
        let mut t = Table::new("x", &["a", "b"]);
        for (i, pair) in values.chunks(2).enumerate() {
            t.push(i as f64, vec![pair[0], pair.get(1).copied().flatten()]);
        }
        prop_assert_eq!(Table::from_csv(&t.to_csv()).unwrap(), t);
    }
}
