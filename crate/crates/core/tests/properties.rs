use std::collections::BTreeSet;

use misc_core::collocation::{cc_node_keys, level_to_nodes, new_points, tensor_quadrature};
use misc_core::estimator::{
    combination_coefficients, error_contribution, estimate, mixed_difference, FnEvaluator,
};
use misc_core::index_sets::{
    apriori_profit_exponent, apriori_set, sgsc_set, stochastic_exponent, RateModel,
};
use misc_core::rates::{complexity_params, fit_spatial_rate, fit_stochastic_rate, RaySamples};
use misc_core::{Evaluator, IndexSet, Mode, MultiIndex, SurplusCache};
use proptest::prelude::*;

fn analytic(alpha: &[u32], y: &[f64]) -> f64 {
    let smooth: f64 = y.iter().enumerate().map(|(j, v)| v / (j + 2) as f64).sum();
    let bias: f64 = alpha.iter().map(|&a| 4f64.powi(-(a as i32))).sum();
    smooth.exp() * (1.0 + bias)
}

/// Grow a downward-closed set from the root by picking frontier members with
/// every level at most 5.
fn grown_set(spatial: usize, stochastic: usize, picks: &[usize]) -> IndexSet {
    let mut set = IndexSet::root(spatial, stochastic);
    for &p in picks {
        let frontier: Vec<_> = set
            .frontier()
            .into_iter()
            .filter(|f| f.levels().iter().all(|&l| l <= 5))
            .collect();
        if frontier.is_empty() {
            break;
        }
        set.insert(frontier[p % frontier.len()].clone()).unwrap();
    }
    set
}

/// Every index in the box `1 <= idx <= corner` satisfying the predicate.
fn box_enumeration(corner: &MultiIndex, keep: impl Fn(&MultiIndex) -> bool) -> BTreeSet<MultiIndex> {
    IndexSet::full_box(corner).iter().filter(|i| keep(i)).cloned().collect()
}

/// Per component, the last level along the root ray that still satisfies
/// `keep`, plus one. Valid as a box for predicates monotone in each component.
fn ray_corner(root: &MultiIndex, keep: impl Fn(&MultiIndex) -> bool) -> MultiIndex {
    let mut corner = root.clone();
    for k in 0..root.len() {
        let mut probe = root.clone();
        while keep(&probe) {
            probe = probe.forward(k);
        }
        corner = MultiIndex::from_levels(
            corner.levels().iter().enumerate().map(|(i, &l)| if i == k { probe.levels()[k] } else { l }).collect(),
            root.spatial_dim(),
        );
    }
    corner
}

fn monomial_mean(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        1.0 / (k + 1) as f64
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_rules_integrate_monomials(
        levels in prop::collection::vec(1u32..=6, 1..=3),
        seeds in prop::collection::vec(0u32..1000, 3),
    ) {
        let degrees: Vec<u32> = levels
            .iter()
            .zip(&seeds)
            .map(|(&l, s)| s % level_to_nodes(l) as u32)
            .collect();
        let q = tensor_quadrature(&levels, |y| {
            y.iter().zip(&degrees).map(|(v, &k)| v.powi(k as i32)).product()
        }).unwrap();
        let exact: f64 = degrees.iter().map(|&k| monomial_mean(k)).product();
        prop_assert!((q - exact).abs() <= 1e-12, "{q} vs {exact}");
    }

    #[test]
    fn coefficients_sum_to_one_and_modes_agree(
        spatial in 0usize..=2,
        stochastic in 1usize..=3,
        picks in prop::collection::vec(0usize..1000, 0..25),
    ) {
        let set = grown_set(spatial, stochastic, &picks);
        prop_assert!(set.is_downward_closed());
        let total: i64 = combination_coefficients(&set).unwrap().values().sum();
        prop_assert_eq!(total, 1);

        let eval = FnEvaluator(analytic);
        let s = estimate(&set, &eval, Mode::Surplus, &mut SurplusCache::new()).unwrap();
        let c = estimate(&set, &eval, Mode::Combination, &mut SurplusCache::new()).unwrap();
        prop_assert!((s - c).abs() <= 1e-12 * s.abs().max(1.0), "{s} vs {c}");
    }

    #[test]
    fn error_decomposition(
        picks in prop::collection::vec(0usize..1000, 1..15),
    ) {
        // Adding a frontier index changes the estimate by exactly its surplus.
        let set = grown_set(1, 2, &picks);
        let eval = FnEvaluator(analytic);
        let mut cache = SurplusCache::new();
        let before = estimate(&set, &eval, Mode::Combination, &mut cache).unwrap();
        for f in set.frontier() {
            let mut bigger = set.clone();
            bigger.insert(f.clone()).unwrap();
            let after = estimate(&bigger, &eval, Mode::Combination, &mut cache).unwrap();
            let de = error_contribution(&f, &eval, &mut cache).unwrap();
            prop_assert!(((after - before).abs() - de).abs() <= 1e-12 * before.abs());
        }
    }

    #[test]
    fn apriori_set_matches_box_enumeration(
        spatial in 1usize..=2,
        stochastic in 1usize..=3,
        level in 2.0f64..14.0,
        r_tilde in prop::collection::vec(1.0f64..3.0, 2),
        gamma_tilde in prop::collection::vec(0.5f64..2.0, 2),
        gs in prop::collection::vec(0.3f64..5.0, 3),
    ) {
        let rates = RateModel::from_tilde(
            &gamma_tilde[..spatial], &r_tilde[..spatial], &gs[..stochastic],
        ).unwrap();
        let root = MultiIndex::ones(spatial, stochastic);
        let built = apriori_set(level, &rates);
        if apriori_profit_exponent(&root, &rates) > level {
            prop_assert!(built.is_err());
        } else {
            let built = built.unwrap();
            let keep = |i: &MultiIndex| apriori_profit_exponent(i, &rates) <= level;
            let oracle = box_enumeration(&ray_corner(&root, keep), keep);
            let got: BTreeSet<_> = built.iter().cloned().collect();
            prop_assert_eq!(got, oracle);
            prop_assert!(built.is_downward_closed());
        }
    }

    #[test]
    fn apriori_sets_grow_with_level(
        level in 7.8f64..16.0,
        step in 0.0f64..3.0,
    ) {
        let rates = RateModel::standard(1, 1).unwrap();
        let small = apriori_set(level, &rates);
        let large = apriori_set(level + step, &rates).unwrap();
        if let Ok(small) = small {
            prop_assert!(small.is_subset(&large));
        }
    }

    #[test]
    fn sgsc_sets_match_threshold_oracle(threshold in 0.0f64..40.0) {
        let rates = RateModel::standard(1, 2).unwrap();
        let s = sgsc_set(&[3], threshold, &rates).unwrap();
        let keep = |b: &MultiIndex| stochastic_exponent(b.beta(), &rates) <= threshold;
        let mut oracle = box_enumeration(&MultiIndex::new(&[], &[8, 8]), keep);
        oracle.insert(MultiIndex::ones(0, 2));
        let got: BTreeSet<_> = s.betas.iter().cloned().collect();
        prop_assert_eq!(got, oracle);
    }

    #[test]
    fn noisy_fits_within_five_percent(
        r in 0.5f64..3.0,
        g in 0.3f64..1.5,
        noise in prop::collection::vec(-0.01f64..0.01, 6),
    ) {
        let spatial = RaySamples {
            direction: vec![1, 0],
            spatial: 1,
            offsets: (1..=6).collect(),
            values: (1..=6u32)
                .map(|j| 2f64.powf(-r * (j + 1) as f64) * (1.0 + noise[j as usize - 1]))
                .collect(),
        };
        let fitted = fit_spatial_rate(&spatial).unwrap();
        prop_assert!((fitted / r - 1.0).abs() < 0.05, "{fitted} vs {r}");

        let stochastic = RaySamples {
            direction: vec![0, 1],
            spatial: 1,
            offsets: (1..=3).collect(),
            values: (1..=3u32)
                .map(|j| (-g * 2f64.powi(j as i32 + 1)).exp() * (1.0 + noise[j as usize]))
                .collect(),
        };
        let fitted = fit_stochastic_rate(&stochastic).unwrap();
        prop_assert!((fitted / g - 1.0).abs() < 0.05, "{fitted} vs {g}");
    }

    #[test]
    fn noiseless_fits_are_exact(r in 0.5f64..3.0, g in 0.3f64..1.5) {
        let spatial = RaySamples {
            direction: vec![1],
            spatial: 1,
            offsets: (1..=5).collect(),
            values: (1..=5u32).map(|j| 2f64.powf(-r * (j + 1) as f64)).collect(),
        };
        prop_assert!((fit_spatial_rate(&spatial).unwrap() / r - 1.0).abs() < 1e-12);
        let stochastic = RaySamples {
            direction: vec![0, 1],
            spatial: 1,
            offsets: (1..=3).collect(),
            values: (1..=3u32).map(|j| (-g * 2f64.powi(j as i32 + 1)).exp()).collect(),
        };
        prop_assert!((fit_stochastic_rate(&stochastic).unwrap() / g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_identity_and_permutation_invariance(
        pairs in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0), 1..=5),
        rotate in 0usize..5,
    ) {
        let gammas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let rs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let p = complexity_params(&RateModel::new(gammas.clone(), rs.clone(), vec![1.0]).unwrap(), 1.0).unwrap();
        let min_eta = rs.iter().zip(&gammas).map(|(r, g)| r / (g + r)).fold(f64::INFINITY, f64::min);
        prop_assert!((p.chi - 1.0 + min_eta).abs() < 1e-14);

        let k = rotate % gammas.len();
        let (mut g2, mut r2) = (gammas.clone(), rs.clone());
        g2.rotate_left(k);
        r2.rotate_left(k);
        let q = complexity_params(&RateModel::new(g2, r2, vec![1.0]).unwrap(), 1.0).unwrap();
        prop_assert_eq!((p.chi, p.zeta, p.zfrak), (q.chi, q.zeta, q.zfrak));
    }
}

#[test]
fn nodes_nest_and_new_point_counts() {
    for l in 1..8 {
        let coarse: BTreeSet<_> = cc_node_keys(l).into_iter().collect();
        let fine: BTreeSet<_> = cc_node_keys(l + 1).into_iter().collect();
        assert!(coarse.is_subset(&fine));
        let expect = match l + 1 {
            1 => 1,
            2 => 2,
            b => 1usize << (b - 2),
        };
        assert_eq!(fine.len() - coarse.len(), expect);
        assert_eq!(new_points(l + 1), expect);
    }
    assert_eq!(new_points(1), 1);
}

#[test]
fn full_boxes_telescope_to_the_corner() {
    let eval = FnEvaluator(analytic);
    let corner = MultiIndex::new(&[3, 3], &[3, 3]);
    let mut cache = SurplusCache::new();
    for idx in IndexSet::full_box(&corner).iter() {
        let b = IndexSet::full_box(idx);
        let est = estimate(&b, &eval, Mode::Surplus, &mut cache).unwrap();
        let direct = cache.tensor_quadrature(idx, &eval).unwrap();
        assert!((est - direct).abs() <= 1e-12 * direct.abs(), "{idx}: {est} vs {direct}");
    }
}

#[test]
fn surplus_sum_counts_each_point_once() {
    struct Counting(std::cell::Cell<usize>);
    impl Evaluator for Counting {
        fn evaluate(&self, alpha: &[u32], y: &[f64]) -> misc_core::Result<f64> {
            self.0.set(self.0.get() + 1);
            Ok(analytic(alpha, y))
        }
    }
    let eval = Counting(Default::default());
    let set = IndexSet::full_box(&MultiIndex::new(&[2], &[3]));
    let mut cache = SurplusCache::new();
    for idx in &set {
        mixed_difference(idx, &eval, &mut cache).unwrap();
    }
    // Two spatial levels times the 5 nested nodes of level 3.
    assert_eq!(eval.0.get(), 10);
}
