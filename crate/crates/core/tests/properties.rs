mod common;

use common::*;
use delaypatch_core::epidemic::{default_dt, SERIES_TOL};
use delaypatch_core::graph::CENTRALITY_DEFAULT_TOL;
use delaypatch_core::*;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 1..4 * n).prop_map(move |pairs| Graph::from_edges(n, pairs).unwrap())
    })
}

fn arb_connected(max_n: usize) -> impl Strategy<Value = Graph> {
    (8..=max_n, 3.0f64..8.0, any::<u64>()).prop_map(|(n, d, seed)| random_graph(n, d, seed))
}

fn source_of(g: &Graph, pick: usize) -> InitialCondition {
    InitialCondition::from_sources(g.n(), &[pick % g.n()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric(g in arb_graph(40)) {
        let mut degree_sum = 0;
        for i in 0..g.n() {
            degree_sum += g.degree(i);
            for &j in g.neighbors(i) {
                prop_assert!(j != i);
                prop_assert!(g.neighbors(j).contains(&i));
            }
        }
        prop_assert_eq!(degree_sum, 2 * g.num_edges());
    }

    #[test]
    fn bfs_distances_differ_by_at_most_one_across_edges(g in arb_graph(40), s in any::<usize>()) {
        let d = multi_source_bfs(&g, &[s % g.n()]).unwrap();
        for &(i, j) in g.edges() {
            match (d[i], d[j]) {
                (Some(a), Some(b)) => prop_assert!(a.abs_diff(b) <= 1),
                (None, None) => {}
                _ => prop_assert!(false, "edge {i}-{j} joins reachable and unreachable nodes"),
            }
        }
    }

    #[test]
    fn centrality_is_an_eigenvector(g in arb_connected(60)) {
        let v = eigenvector_centrality(&g, CENTRALITY_DEFAULT_TOL).unwrap();
        let mut av = vec![0.0; g.n()];
        g.adjacency_mul(&v, &mut av);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let lambda = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>() / vv;
        let residual = av.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(residual <= 10.0 * CENTRALITY_DEFAULT_TOL * g.max_degree() as f64 * vv.sqrt());
        prop_assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn bound_is_a_probability_and_grows_with_time(g in arb_connected(50), s in any::<usize>(), t in 0.0f64..200.0) {
        let init = source_of(&g, s);
        let at = |t: f64| transient_bound(&g, &init, &EpidemicParams::new(0.01, t).unwrap(), SERIES_TOL).unwrap();
        let (early, late) = (at(t), at(t + 10.0));
        for i in 0..g.n() {
            prop_assert!((0.0..=1.0).contains(&early[i]));
            prop_assert!(early[i] <= late[i] + 1e-12);
        }
    }

    #[test]
    fn mean_field_stays_below_the_bound(g in arb_connected(50), s in any::<usize>(), t in 1.0f64..150.0) {
        let init = source_of(&g, s);
        let params = EpidemicParams::new(0.01, t).unwrap();
        let x = solve_si_mean_field(&g, &init, &params, default_dt(0.01)).unwrap();
        let bound = transient_bound(&g, &init, &params, SERIES_TOL).unwrap();
        for i in 0..g.n() {
            prop_assert!(x[i] <= bound[i] + 1e-6, "node {i}: {} > {}", x[i], bound[i]);
        }
    }

    #[test]
    fn simulation_is_deterministic(g in arb_connected(40), s in any::<usize>(), seed in any::<u64>()) {
        let init = source_of(&g, s);
        let params = EpidemicParams::new(0.05, 100.0).unwrap();
        let a = simulate_si(&g, &init, &params, seed).unwrap();
        let b = simulate_si(&g, &init, &params, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.events.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
        }
        prop_assert!(a.events.iter().all(|&(t, _)| t > 0.0 && t <= 100.0));
    }

    #[test]
    fn critical_and_flipped_weights_sum_to_one(g in arb_connected(60), seed in any::<u64>()) {
        let x = random_probabilities(g.n(), seed);
        let c = critical_weights(&g, &x).unwrap();
        let f = flipped_weights(&g, &x).unwrap();
        for (a, b) in c.values().iter().zip(f.values()) {
            prop_assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
            // Values below the zero threshold are stored as exact zeros.
            prop_assert!((a + b - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn laplacian_annihilates_constants_and_is_psd(g in arb_connected(80), seed in any::<u64>()) {
        let lap = build_laplacian(&flipped_weights(&g, &random_probabilities(g.n(), seed)).unwrap()).unwrap();
        let ones = vec![1.0; g.n()];
        prop_assert!(lap.laplacian.mul_vec(&ones).iter().all(|x| x.abs() < 1e-12));
        let d = dense(&lap.normalized);
        prop_assert!((&d - d.transpose()).amax() < 1e-15);
        let eig = SymmetricEigen::new(d).eigenvalues;
        prop_assert!(eig.min() >= -1e-10 && eig.max() <= 2.0 + 1e-10);
    }

    #[test]
    fn anchors_land_on_their_side(g in arb_connected(120), s in any::<usize>(), t in 1.0f64..60.0, ppm in any::<bool>()) {
        let init = source_of(&g, s);
        let xhat = transient_bound(&g, &init, &EpidemicParams::new(0.01, t).unwrap(), SERIES_TOL).unwrap();
        let cons = match select_constraints(&g, &init, &xhat) {
            Ok(c) => c,
            Err(Error::NoHealthyNodes) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(cons.with_label(Side::Infected).count() >= 1);
        prop_assert!(cons.with_label(Side::Healthy).count() >= 1);
        let lap = build_laplacian(&flipped_weights(&g, &xhat).unwrap()).unwrap();
        let kind = if ppm { SolverKind::Ppm } else { SolverKind::Uzawa };
        let part = partition::solve(kind, &g, &lap, &cons, &SolverOptions::default()).unwrap();
        for &(i, side) in cons.anchors() {
            prop_assert_eq!(part.sides[i], side);
        }
        for &(i, j) in &part.cutset {
            prop_assert!(part.sides[i] != part.sides[j]);
        }
    }

    #[test]
    fn uzawa_residual_shrinks_with_the_penalty(g in arb_connected(100), seed in any::<u64>(), exp in 2i32..8) {
        let mu = 10f64.powi(exp);
        let lap = build_laplacian(&flipped_weights(&g, &random_probabilities(g.n(), seed)).unwrap()).unwrap();
        let cons = random_anchors(g.n(), 2, seed);
        let opts = SolverOptions { mu, ..SolverOptions::default() };
        let v = uzawa_solve(&g, &lap, &cons, &opts).unwrap().v;
        let residual = cons.anchors().iter().map(|&(i, s)| (v[i] - s.target()).abs()).fold(0.0, f64::max);
        prop_assert!(residual <= 10.0 / mu.sqrt());
    }

    #[test]
    fn ppm_solution_is_feasible(g in arb_connected(100), seed in any::<u64>()) {
        let lap = build_laplacian(&flipped_weights(&g, &random_probabilities(g.n(), seed)).unwrap()).unwrap();
        let cons = random_anchors(g.n(), 2, seed);
        let v = ppm_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap().v;
        for &(i, s) in cons.anchors() {
            prop_assert!((v[i] - s.target()).abs() <= 1e-10);
        }
        let r2: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((r2.sqrt() - lap.volume().sqrt()).abs() <= 1e-10 * lap.volume().sqrt().max(1.0));
    }

    #[test]
    fn plans_respect_budget_and_sources(
        g in arb_connected(150), k in 1usize..4, seed in any::<u64>(), t in 0.0f64..50.0, b in 0.01f64..=1.0,
    ) {
        let init = harness::choose_sources(&g, Some(k.min(g.n() - 1)), seed).unwrap();
        let mut cfg = ExperimentConfig::new(
            GraphSource::EdgeList { path: "unused".into() }, 0.01, t, b, 1, seed,
        );
        cfg.solver = if seed % 2 == 0 { SolverKind::Uzawa } else { SolverKind::Ppm };
        prop_assume!(b * g.n() as f64 >= 1.0);
        let cap = Budget::new(b).unwrap().count(g.n()).unwrap();
        if let Some(plans) = harness::plan_trial(&g, &init, &cfg, None).unwrap() {
            for plan in plans {
                prop_assert!(plan.nodes.len() <= cap);
                prop_assert!(plan.nodes.iter().all(|&i| !init.is_source(i)));
                let mut sorted = plan.nodes.clone();
                sorted.sort_unstable();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), plan.nodes.len());
            }
        }
    }

    #[test]
    fn large_budget_clears_the_cut(g in arb_connected(120), s in any::<usize>(), t in 1.0f64..40.0) {
        let init = source_of(&g, s);
        let xhat = transient_bound(&g, &init, &EpidemicParams::new(0.01, t).unwrap(), SERIES_TOL).unwrap();
        let Ok(cons) = select_constraints(&g, &init, &xhat) else { return Ok(()) };
        let lap = build_laplacian(&flipped_weights(&g, &xhat).unwrap()).unwrap();
        let part = uzawa_solve(&g, &lap, &cons, &SolverOptions::default()).unwrap();
        let endpoints: std::collections::BTreeSet<usize> = part
            .cutset
            .iter()
            .flat_map(|&(i, j)| [i, j])
            .filter(|&i| part.sides[i] == Side::Healthy && !init.is_source(i))
            .collect();
        let plan = delayed_select(&g, &part, &init, &xhat, Budget::new(1.0).unwrap()).unwrap();
        prop_assert!(endpoints.len() <= g.n());
        let chosen = plan.mask(g.n());
        for &(i, j) in &part.cutset {
            let healthy = if part.sides[i] == Side::Healthy { i } else { j };
            prop_assert!(chosen[healthy] || init.is_source(healthy));
        }
        let again = delayed_select(&g, &part, &init, &xhat, Budget::new(1.0).unwrap()).unwrap();
        prop_assert_eq!(plan, again);
    }
}
