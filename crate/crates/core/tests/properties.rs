use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use localdiff::diffusion::{
    dense_solve, make_katz_system, make_ppr_system, series_oracle, OperatorQ, Propagation,
};
use localdiff::dynamic::{random_event_batches, run_snapshots, PprPair, SnapshotMode};
use localdiff::graph::generators::{erdos_renyi, to_edge_list};
use localdiff::graph::{load_edge_list, CsrGraph, EdgeEvent};
use localdiff::local::{local_gd_observed, local_gs, local_sor_observed};
use localdiff::metrics::{participation_ratio, sample_sources};
use localdiff::solver::{Limits, SolveReport, SweepView};

fn arb_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..30).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 1..80)))
}

fn arb_er() -> impl Strategy<Value = CsrGraph> {
    (10usize..60, 0.05f64..0.3, any::<u64>()).prop_map(|(n, p, seed)| erdos_renyi(n, p, seed))
}

fn edge_set(g: &CsrGraph) -> BTreeSet<(usize, usize)> {
    g.edges().collect()
}

/// Collects `‖r‖₁` and the smallest residual entry at every sweep boundary.
struct Trace {
    l1: Vec<f64>,
    min: f64,
}

impl Trace {
    fn new() -> Self {
        Self { l1: Vec::new(), min: f64::INFINITY }
    }

    fn record(&mut self, v: &SweepView) {
        self.l1.push(v.r.iter().map(|x| x.abs()).sum());
        self.min = v.r.iter().copied().fold(self.min, f64::min);
    }

    fn check(&self, rep: &SolveReport) {
        assert!(self.min >= -1e-15 && rep.min_residual >= -1e-15, "min residual {}", self.min);
        for w in self.l1.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "l1 grew from {} to {}", w[0], w[1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_is_symmetric_and_simple((n, edges) in arb_edges()) {
        let g = CsrGraph::from_edges(n, &edges).unwrap();
        g.validate().unwrap();
        for u in 0..n {
            let nb = g.neighbors(u);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nb.contains(&u));
            for &v in nb {
                prop_assert!(g.has_edge(v, u));
            }
        }
        let expected: BTreeSet<_> =
            edges.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
        prop_assert_eq!(edge_set(&g), expected);
        prop_assert_eq!(g.total_volume(), 2 * g.m());
    }

    #[test]
    fn edge_list_round_trip(g in arb_er()) {
        prop_assume!(g.m() > 0);
        let loaded = load_edge_list(to_edge_list(&g).as_bytes()).unwrap();
        let relabel: Vec<usize> = loaded.labels.iter().map(|l| l.parse().unwrap()).collect();
        let back: BTreeSet<_> = loaded
            .graph
            .edges()
            .map(|(a, b)| (relabel[a].min(relabel[b]), relabel[a].max(relabel[b])))
            .collect();
        prop_assert_eq!(back, edge_set(&g));
    }

    #[test]
    fn cache_round_trip(g in arb_er()) {
        let mut buf = Vec::new();
        g.write_cache(&mut buf).unwrap();
        prop_assert_eq!(CsrGraph::read_cache(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn insert_then_delete_restores(g in arb_er(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let (u, v) = (a.index(g.n()), b.index(g.n()));
        prop_assume!(u != v && !g.has_edge(u, v));
        let added = g.apply_event(&EdgeEvent::insert(u, v)).unwrap();
        prop_assert!(added.has_edge(u, v) && added.has_edge(v, u));
        prop_assert_eq!(added.m(), g.m() + 1);
        let mut back = added.clone();
        back.apply_event_in_place(&EdgeEvent::delete(u, v)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn spectral_estimate_matches_eigenvalues(g in (3usize..40, 0.1f64..0.5, any::<u64>()).prop_map(|(n, p, s)| erdos_renyi(n, p, s))) {
        prop_assume!(g.m() > 0);
        let n = g.n();
        let a: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| if g.has_edge(i, j) { 1.0 } else { 0.0 });
        let exact = a.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |m, l: &f64| m.max(l.abs()));
        let est = g.spectral_norm_estimate(3000, 1).unwrap();
        prop_assert!(est <= exact * (1.0 + 1e-9), "{} > {}", est, exact);
        prop_assert!(est >= exact * (1.0 - 1e-3), "{} << {}", est, exact);
    }

    #[test]
    fn operator_is_linear(g in arb_er(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for kind in [Propagation::RandomWalk, Propagation::Adjacency, Propagation::Generalized { exponent: 0.5 }] {
            let op = OperatorQ::new(&g, 0.7, kind);
            let x: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (qx, qy, qm) = (op.apply(&x), op.apply(&y), op.apply(&mix));
            for i in 0..g.n() {
                prop_assert!((qm[i] - (a * qx[i] + b * qy[i])).abs() <= 1e-12);
            }
            let mut par = vec![0.0; g.n()];
            op.apply_into(&mix, &mut par, true);
            prop_assert_eq!(&par, &qm);
        }
    }

    #[test]
    fn ppr_mass_is_one_on_graphs_without_isolated_nodes(g in arb_er(), alpha in 0.05f64..0.95) {
        prop_assume!((0..g.n()).all(|u| g.degree(u) > 0));
        let sys = make_ppr_system(&g, alpha, 0, 1e-6, false).unwrap();
        let f = dense_solve(&sys).unwrap();
        prop_assert!(f.iter().all(|v| *v >= -1e-14));
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let (st, rep) = local_gs(&sys, Limits::LOCAL);
        let local = st.estimate(&sys);
        prop_assert!(rep.converged);
        prop_assert!(local.iter().all(|v| *v >= 0.0));
        prop_assert!(local.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn series_partial_sums_increase_to_the_solution(g in arb_er(), alpha in 0.2f64..0.9) {
        let s = sample_sources(&g, 1, 0)[0];
        let sys = make_ppr_system(&g, alpha, s, 1e-6, false).unwrap();
        let mut prev = vec![0.0; g.n()];
        for k in [1, 2, 4, 8, 16] {
            let f = series_oracle(&sys, k);
            prop_assert!(f.iter().zip(&prev).all(|(a, b)| *a >= *b - 1e-15));
            prev = f;
        }
        let exact = dense_solve(&sys).unwrap();
        let tail = (1.0 - alpha).powi(200);
        let far = series_oracle(&sys, 200);
        for (a, b) in far.iter().zip(&exact) {
            prop_assert!((a - b).abs() <= tail + 1e-12);
        }
    }

    #[test]
    fn participation_ratio_bounds_and_scale(f in prop::collection::vec(-10.0f64..10.0, 1..200), c in prop::sample::select(vec![-2.0, 0.5, 10.0])) {
        prop_assume!(f.iter().any(|v| *v != 0.0));
        let p = participation_ratio(&f).unwrap();
        let n = f.len() as f64;
        prop_assert!(p >= 1.0 / n - 1e-12 && p <= 1.0 + 1e-12);
        let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
        prop_assert!((participation_ratio(&scaled).unwrap() - p).abs() <= 1e-12);
    }

    #[test]
    fn local_residuals_stay_nonnegative_and_shrink(g in arb_er(), eps in prop::sample::select(vec![1e-2, 1e-4, 1e-6])) {
        let s = sample_sources(&g, 1, 3)[0];
        let sys = make_ppr_system(&g, 0.15, s, eps, false).unwrap();
        for omega in [0.5, 1.0] {
            let mut t = Trace::new();
            let (st, rep) = local_sor_observed(&sys, omega, Limits::LOCAL, Some(&mut |v: &SweepView| t.record(v))).unwrap();
            t.check(&rep);
            prop_assert!(rep.converged);
            prop_assert!(st.consistency_error(&sys) <= 1e-12);
        }
        let sym = make_ppr_system(&g, 0.15, s, eps, true).unwrap();
        let mut t = Trace::new();
        let (st, rep) = local_gd_observed(&sym, Limits::LOCAL, false, Some(&mut |v: &SweepView| t.record(v))).unwrap();
        t.check(&rep);
        prop_assert!(rep.converged);
        prop_assert!(st.consistency_error(&sym) <= 1e-12);
    }

    #[test]
    fn katz_local_meets_stop_rule(g in arb_er(), eps in prop::sample::select(vec![1e-3, 1e-5])) {
        let s = sample_sources(&g, 1, 5)[0];
        let alpha = 0.9 / g.max_degree() as f64;
        let sys = make_katz_system(&g, alpha, s, eps).unwrap();
        let (st, rep) = local_gs(&sys, Limits::LOCAL);
        prop_assert!(rep.converged);
        for (u, r) in st.r.iter().enumerate() {
            if g.degree(u) > 0 {
                prop_assert!(r.abs() / g.degree(u) as f64 <= eps);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dynamic_pair_stays_consistent(seed in any::<u64>()) {
        let g0 = erdos_renyi(80, 0.06, seed);
        let s = sample_sources(&g0, 1, seed)[0];
        let batches = random_event_batches(&g0, 4, 15, seed ^ 0xabc);
        let pair = PprPair::classic(&g0, s, 0.1, 1e-6, 1.0).unwrap();
        let out = run_snapshots(&g0, &batches, &pair, SnapshotMode::Dynamic, Limits::LOCAL, true).unwrap();
        for rec in &out.records {
            prop_assert!(rec.converged);
            prop_assert!(rec.consistency_error.unwrap() <= 1e-9);
        }
        let sys = out.pair.system(&out.graph);
        let f = out.pair.estimate();
        let exact = dense_solve(&sys).unwrap();
        let exact = sys.back_transform(&exact);
        for u in 0..out.graph.n() {
            if out.graph.degree(u) > 0 {
                assert_abs_diff_eq!(f[u] / out.graph.degree(u) as f64, exact[u] / out.graph.degree(u) as f64, epsilon = 1e-6);
            }
        }
    }
}
