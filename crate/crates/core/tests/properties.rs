mod common;

use common::{dense_f, interior_alpha, random_budgeted, random_instance};
use osp_core::budgeted::{check_budgeted, DerivativeBounds};
use osp_core::dynamics::derivative_sign;
use osp_core::oracle::{brute_force_optimum, check_local_global, CornerEnumeration};
use osp_core::{
    equilibrium_exact, gradient_exact, influence_exact, perturb_innate, solve, solve_budgeted, BatchSize, BudgetConfig,
    BudgetStrategy, DerivativeEstimate, EquilibriumEstimate, InteractionMatrix, Profile, ResistanceVector, Sign,
    SolverConfig, Strategy as SearchStrategy, WeightedEdgeList,
};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn profiles() -> impl proptest::strategy::Strategy<Value = Profile> {
    prop_oneof![
        Just(Profile::Uniform),
        Just(Profile::PowerLawLow),
        Just(Profile::PowerLawHigh)
    ]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rows_are_stochastic(
        n in 2usize..30,
        chords in prop::collection::vec((0usize..30, 0usize..30, 0.01f64..5.0), 0..60),
        symmetrize in any::<bool>(),
    ) {
        let mut e = WeightedEdgeList::new(n);
        for i in 0..n {
            e.push(i, (i + 1) % n, 1.0);
        }
        for (u, v, w) in chords {
            e.push(u % n, v % n, w);
        }
        let m = InteractionMatrix::from_edge_list(&e, symmetrize).unwrap();
        for i in 0..n {
            prop_assert!((m.row_sum(i) - 1.0).abs() <= 1e-12);
            prop_assert!(m.row(i).all(|(_, p)| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn diluted_map_contracts(n in 2usize..40, seed in any::<u64>()) {
        let inst = random_instance(n, seed);
        let alpha = interior_alpha(&inst, seed);
        let eps = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        let z1: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.37 + seed as f64).sin() + 1.0) / 2.0).collect();
        let z2: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.91).cos() + 1.0) / 2.0).collect();
        let t1 = inst.matrix.apply_diluted(&alpha, &inst.s, &z1).unwrap();
        let t2 = inst.matrix.apply_diluted(&alpha, &inst.s, &z2).unwrap();
        let before = z1.iter().zip(&z2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let after = t1.iter().zip(&t2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(after <= (1.0 - eps) * before + 1e-15);
    }

    #[test]
    fn equilibrium_is_an_average_of_opinions(n in 1usize..40, seed in any::<u64>()) {
        let inst = random_instance(n, seed);
        let alpha = interior_alpha(&inst, seed);
        let z = equilibrium_exact(&inst, &alpha, usize::MAX).unwrap();
        let lo = inst.s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = inst.s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(z.iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        let total: f64 = z.iter().sum();
        prop_assert!(total <= n as f64 + 1e-9);
    }

    #[test]
    fn certified_radius_covers_error(n in 1usize..30, seed in any::<u64>(), steps in 0u64..120) {
        let inst = random_instance(n, seed);
        let res = ResistanceVector::new(interior_alpha(&inst, seed)).unwrap();
        let exact = equilibrium_exact(&inst, res.as_slice(), usize::MAX).unwrap();
        let r_exact = influence_exact(&inst, res.as_slice(), usize::MAX).unwrap();
        let mut z = EquilibriumEstimate::ones(n, &res);
        let mut r = DerivativeEstimate::new(n, &res);
        for _ in 0..steps {
            z.step(&inst.matrix, &inst.s, &res).unwrap();
            r.step(&inst.matrix, &res).unwrap();
        }
        let dz = z.z().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(dz <= z.err() + 1e-13);
        let dr: f64 = r.r().iter().zip(&r_exact).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(dr <= r.err_r() * (1.0 + 1e-12) + 1e-12 * r_exact.iter().sum::<f64>());
        prop_assert!(r.err_r() <= n as f64 * z.err() + 1e-300);
    }

    #[test]
    fn sign_test_agrees_with_gradient(n in 2usize..20, seed in any::<u64>()) {
        let inst = random_instance(n, seed);
        let alpha = interior_alpha(&inst, seed);
        let z = equilibrium_exact(&inst, &alpha, usize::MAX).unwrap();
        let g = gradient_exact(&inst, &alpha, usize::MAX).unwrap();
        for i in 0..n {
            match derivative_sign(&inst, &z, 0.0, i) {
                Ok(Sign::Positive) => prop_assert!(g[i] > 0.0),
                Ok(Sign::Negative) => prop_assert!(g[i] < 0.0),
                Ok(Sign::Zero) => prop_assert!(g[i] == 0.0),
                Err(_) => prop_assert!((inst.s[i] - z[i]).abs() <= 1e-9),
            }
        }
    }

    #[test]
    fn objective_is_monotone_along_each_coordinate(n in 2usize..10, seed in any::<u64>(), i in 0usize..10) {
        let inst = random_instance(n, seed);
        let i = i % n;
        let mut alpha = interior_alpha(&inst, seed);
        let grid: Vec<f64> = (0..=20)
            .map(|k| inst.lower[i] + (inst.upper[i] - inst.lower[i]) * k as f64 / 20.0)
            .collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&a| {
                alpha[i] = a;
                dense_f(&inst, &alpha)
            })
            .collect();
        let rising = values.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        let falling = values.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        prop_assert!(rising || falling);
    }

    #[test]
    fn perturbation_is_small_and_in_range(
        s in prop::collection::vec(0.0f64..=1.0, 1..50),
        magnitude in 1e-12f64..1e-7,
        seed in any::<u64>(),
    ) {
        let p = perturb_innate(&s, magnitude, seed);
        prop_assert_eq!(p.len(), s.len());
        for (a, b) in s.iter().zip(&p) {
            prop_assert!((a - b).abs() <= magnitude);
            prop_assert!((0.0..=1.0).contains(b));
        }
        for i in 0..s.len() {
            for j in 0..s.len() {
                if s[i] > s[j] + 2.0 * magnitude {
                    prop_assert!(p[i] > p[j]);
                }
            }
        }
        prop_assert_eq!(perturb_innate(&s, 0.0, seed), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn strategies_match_brute_force(n in 1usize..=10, seed in any::<u64>()) {
        let inst = random_instance(n, seed);
        let (mask, best) = brute_force_optimum(&inst).unwrap();
        let mut corners = Vec::new();
        for strategy in SearchStrategy::ALL {
            let r = solve(&inst, &SolverConfig { seed, ..SolverConfig::with_strategy(strategy) }).unwrap();
            prop_assert!((dense_f(&inst, r.alpha.as_slice()) - best).abs() <= 1e-9);
            prop_assert!(r.alpha.as_slice().iter().enumerate().all(|(i, &a)| a == inst.lower[i] || a == inst.upper[i]));
            if strategy != SearchStrategy::Optimistic {
                prop_assert_eq!(r.trace.mistakes, 0);
                prop_assert!(r.flip_counts.iter().all(|&c| c <= 1));
                prop_assert!(r.trace.points.windows(2).all(|w| w[1].ratio_lower >= w[0].ratio_lower));
            }
            corners.push(r.at_lower);
        }
        prop_assert!(corners.windows(2).all(|w| w[0] == w[1]));
        let found = osp_core::oracle::corner_mask(&corners[0]);
        let corners_f = CornerEnumeration::new(&inst).unwrap();
        prop_assert!((corners_f.value(found) - corners_f.value(mask)).abs() <= 1e-9);
    }

    #[test]
    fn local_minima_are_global(n in 1usize..=8, seed in any::<u64>()) {
        let inst = random_instance(n, seed);
        prop_assert!(check_local_global(&inst).unwrap().passed());
    }

    #[test]
    fn derivative_bounds_sandwich_exact_values(n in 2usize..15, seed in any::<u64>(), steps in 0u64..400, profile in profiles()) {
        let inst = random_budgeted(n, seed, profile);
        let res = inst.initial_resistance().unwrap();
        let alpha = res.as_slice().to_vec();
        let mut z = EquilibriumEstimate::ones(n, &res);
        let mut r = DerivativeEstimate::new(n, &res);
        for _ in 0..steps {
            z.step(&inst.matrix, &inst.s, &res).unwrap();
            r.step(&inst.matrix, &res).unwrap();
        }
        let b = DerivativeBounds::compute(&inst, &inst.s, &alpha, z.z(), r.r(), z.err());
        let d = gradient_exact(&inst, &alpha, usize::MAX).unwrap();
        for i in 0..n {
            let slack = 1e-9 * (1.0 + d[i].abs());
            prop_assert!(b.d_lower[i] <= d[i].abs() + slack, "agent {}: {} > |{}|", i, b.d_lower[i], d[i]);
            prop_assert!(d[i].abs() <= b.d_upper[i] + slack, "agent {}: |{}| > {}", i, d[i], b.d_upper[i]);
            prop_assert!(b.delta_lower[i] <= b.delta_upper[i] + slack);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn budgeted_results_respect_the_budget(
        n in 3usize..25,
        seed in any::<u64>(),
        k in 1usize..6,
        profile in profiles(),
        batch in 1usize..4,
    ) {
        let inst = random_budgeted(n, seed, profile);
        let k = k.min(n);
        let cfg = BudgetConfig { seed, batch: BatchSize::Count(batch.min(k)), ..BudgetConfig::new(k) };
        for st in [BudgetStrategy::Marginal, BudgetStrategy::BatchGradient, BudgetStrategy::Random] {
            let r = solve_budgeted(&inst, st, &cfg).unwrap();
            check_budgeted(&inst, &r).unwrap();
            prop_assert!(r.order.len() <= k);
            if st == BudgetStrategy::Marginal {
                prop_assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
            }
        }
    }
}
