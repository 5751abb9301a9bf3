//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use localdiff::diffusion::{
    default_katz_alpha, dense_solve, make_hk_system, make_katz_system, make_ppr_system, series_oracle,
    DiffusionSystem, Problem,
};
use localdiff::dynamic::{random_event_batches, run_snapshots, PprPair, SnapshotMode};
use localdiff::global::hk_taylor_global;
use localdiff::graph::generators::{chung_lu, erdos_renyi};
use localdiff::graph::CsrGraph;
use localdiff::local::{local_ch, local_gd, local_gd_observed, local_gs, local_hk_system, local_sor};
use localdiff::metrics::{
    bench, error_norms, evaluate_bounds, participation_ratio, run_method, sample_sources, speedup_ratio, BenchConfig,
    Method, ProblemSpec, RunOptions, Verdict,
};
use localdiff::solver::{optimal_omega, Limits, SolveReport, SolverState, SweepView};

const EPS_GRID: [f64; 3] = [1e-2, 1e-4, 1e-6];
const PPR_ALPHA: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Thirty seeded Erdős–Rényi graphs with `n ∈ [20, 200]` and
/// `p ∈ [0.02, 0.2]`, each paired with one non-isolated source.
fn corpus() -> Vec<(CsrGraph, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < 30 {
        let n = rng.gen_range(20..=200);
        let p = rng.gen_range(0.02..=0.2);
        let g = erdos_renyi(n, p, seed);
        seed += 1;
        if g.m() == 0 {
            continue;
        }
        let s = sample_sources(&g, 1, seed)[0];
        out.push((g, s));
    }
    out
}

/// `max_u |b - Qx|_u / d_u` over non-isolated nodes, recomputed from `x`.
fn recomputed_dscaled_residual(sys: &DiffusionSystem, st: &SolverState) -> f64 {
    let g = sys.graph();
    sys.residual(&st.x)
        .iter()
        .enumerate()
        .filter(|(u, _)| g.degree(*u) > 0)
        .map(|(u, r)| r.abs() / g.degree(u) as f64)
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut runs, mut failures) = (0, Vec::new());
    let omega = optimal_omega(PPR_ALPHA).unwrap();
    for (i, (g, s)) in corpus().iter().enumerate() {
        let katz_alpha = default_katz_alpha(g).unwrap();
        for eps in EPS_GRID {
            for method in Method::ALL {
                for problem in ["ppr", "katz"] {
                    let sys = match problem {
                        "ppr" => make_ppr_system(g, PPR_ALPHA, *s, eps, method.needs_symmetric()).unwrap(),
                        _ => make_katz_system(g, katz_alpha, *s, eps).unwrap(),
                    };
                    let w = if problem == "ppr" { omega } else { 1.0 };
                    let opts = RunOptions { omega: w, ..RunOptions::default() };
                    let (st, rep) = run_method(&sys, method, opts).unwrap();
                    runs += 1;
                    let ok = rep.converged
                        && if problem == "ppr" {
                            let f = st.estimate(&sys);
                            let exact = dense_solve(&sys).unwrap();
                            error_norms(&f, &exact, g).unwrap().linf_dscaled <= eps
                        } else {
                            recomputed_dscaled_residual(&sys, &st) <= eps * (1.0 + 1e-9)
                        };
                    if !ok {
                        failures.push(format!("graph {i} {problem} {method} eps {eps}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{runs} runs, {} failures{}, {:.1}s (budget 60s)",
            failures.len(),
            first(&failures),
            elapsed.as_secs_f64()
        ),
    )
}

fn first(failures: &[String]) -> String {
    failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
}

fn monotone(rep: &SolveReport) -> bool {
    rep.min_residual >= -1e-15 && rep.residual_l1_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

/// PPR plus Katz with `α = 0.9/d_max`, the regime where the invariants are
/// claimed.
fn monotone_systems(g: &CsrGraph, s: usize, eps: f64, symmetric: bool) -> Vec<DiffusionSystem<'_>> {
    let katz_alpha = 0.9 / g.max_degree() as f64;
    vec![make_ppr_system(g, PPR_ALPHA, s, eps, symmetric).unwrap(), make_katz_system(g, katz_alpha, s, eps).unwrap()]
}

fn criterion_2() -> Outcome {
    let (mut runs, mut failures) = (0, Vec::new());
    for (i, (g, s)) in corpus().iter().enumerate() {
        for eps in EPS_GRID {
            for sys in monotone_systems(g, *s, eps, false) {
                let mut reps = vec![("local-gs", local_gs(&sys, Limits::LOCAL).1)];
                for w in [0.5, 1.0] {
                    reps.push(("local-sor", local_sor(&sys, w, Limits::LOCAL).unwrap().1));
                }
                if let Problem::Katz { .. } = sys.problem {
                    reps.push(("local-gd", local_gd(&sys, Limits::LOCAL, false).unwrap().1));
                }
                for (name, rep) in reps {
                    runs += 1;
                    if !monotone(&rep) {
                        failures.push(format!("graph {i} {} {name} eps {eps}", sys.problem.name()));
                    }
                }
            }
            let sym = make_ppr_system(g, PPR_ALPHA, *s, eps, true).unwrap();
            let (_, rep) = local_gd(&sym, Limits::LOCAL, false).unwrap();
            runs += 1;
            if !monotone(&rep) {
                failures.push(format!("graph {i} ppr local-gd eps {eps}"));
            }
        }
    }
    outcome(failures.is_empty(), format!("{runs} runs, {} violations{}", failures.len(), first(&failures)))
}

fn criterion_3() -> Outcome {
    let (mut evaluated, mut with_arms, mut failures) = (0, 0, Vec::new());
    let mut check = |label: String, rep: &SolveReport, sys: &DiffusionSystem| {
        let v = evaluate_bounds(rep, sys).unwrap();
        if v.overall == Verdict::NotEvaluated {
            return;
        }
        evaluated += 1;
        with_arms += (v.ops_arm == Verdict::Pass && v.side_arm == Verdict::Pass) as usize;
        if v.overall != Verdict::Pass {
            failures.push(format!("{label}: {v:?}"));
        }
    };
    let omega = optimal_omega(PPR_ALPHA).unwrap();
    for (i, (g, s)) in corpus().iter().enumerate() {
        let katz_alpha = default_katz_alpha(g).unwrap();
        for eps in EPS_GRID {
            for method in Method::ALL {
                let systems = [
                    (make_ppr_system(g, PPR_ALPHA, *s, eps, method.needs_symmetric()).unwrap(), omega),
                    (make_katz_system(g, katz_alpha, *s, eps).unwrap(), 1.0),
                ];
                for (sys, w) in systems {
                    let (_, rep) = run_method(&sys, method, RunOptions { omega: w, ..RunOptions::default() }).unwrap();
                    check(format!("graph {i} {} {method} eps {eps}", sys.problem.name()), &rep, &sys);
                }
            }
            for sys in monotone_systems(g, *s, eps, false) {
                let name = sys.problem.name();
                check(format!("graph {i} {name} local-gs eps {eps}"), &local_gs(&sys, Limits::LOCAL).1, &sys);
                let (_, rep) = local_sor(&sys, 1.0, Limits::LOCAL).unwrap();
                check(format!("graph {i} {name} local-sor eps {eps}"), &rep, &sys);
            }
            for sys in monotone_systems(g, *s, eps, true) {
                let (_, rep) = local_gd(&sys, Limits::LOCAL, false).unwrap();
                check(format!("graph {i} {} local-gd eps {eps}", sys.problem.name()), &rep, &sys);
            }
        }
    }
    outcome(
        failures.is_empty() && with_arms > 0,
        format!(
            "{evaluated} converged runs evaluated ({with_arms} with both arms checked), {} failures{}",
            failures.len(),
            first(&failures)
        ),
    )
}

/// `1/(N! N)` evaluated in log space.
fn factorial_tail(stages: usize) -> f64 {
    let ln_fact: f64 = (1..=stages).map(|k| (k as f64).ln()).sum();
    (-(ln_fact + (stages as f64).ln())).exp()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (mut runs, mut worst, mut failures) = (0, 0.0f64, Vec::new());
    for seed in 0..10u64 {
        let n = 20 + 8 * seed as usize;
        let g = erdos_renyi(n, 0.08, 500 + seed);
        if g.m() == 0 {
            continue;
        }
        let s = sample_sources(&g, 1, seed)[0];
        for tau in [0.5, 1.0, 5.0] {
            for eps in EPS_GRID {
                let sys = make_hk_system(&g, tau, s, eps).unwrap();
                let Problem::HeatKernel { stages, .. } = sys.problem else { unreachable!() };
                let allowance = eps + factorial_tail(stages);
                let oracle = series_oracle(&sys, 60);
                let (st_local, rep_local) = local_hk_system(&sys, Limits::LOCAL);
                let (st_global, rep_global) = hk_taylor_global(&sys, Limits::GLOBAL).unwrap();
                for (name, st, rep) in [("local", &st_local, &rep_local), ("global", &st_global, &rep_global)] {
                    runs += 1;
                    let gap = error_norms(&st.estimate(&sys), &oracle, &g).unwrap().l1;
                    worst = worst.max(gap / allowance);
                    if !rep.converged || gap > allowance {
                        failures.push(format!("n {n} tau {tau} eps {eps} {name}: gap {gap:.3e} > {allowance:.3e}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{runs} runs, worst gap/allowance {worst:.3}, {} failures{}, {:.1}s (budget 30s)",
            failures.len(),
            first(&failures),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let eps = 1e-6;
    let (mut worst_gap, mut worst_consistency, mut failures) = (0.0f64, 0.0f64, Vec::new());
    for seed in 0..3u64 {
        let g0 = erdos_renyi(500, 0.02, 700 + seed);
        let s = sample_sources(&g0, 1, seed)[0];
        let batches = random_event_batches(&g0, 10, 20, 800 + seed);
        for omega in [1.0, optimal_omega(PPR_ALPHA).unwrap()] {
            let pair = PprPair::classic(&g0, s, PPR_ALPHA, eps, omega).unwrap();
            let dynamic = run_snapshots(&g0, &batches, &pair, SnapshotMode::Dynamic, Limits::LOCAL, true).unwrap();
            let fresh = run_snapshots(&g0, &batches, &pair, SnapshotMode::Static, Limits::LOCAL, false).unwrap();
            assert_eq!(dynamic.graph, fresh.graph);
            let gap = error_norms(&dynamic.pair.estimate(), &fresh.pair.estimate(), &dynamic.graph).unwrap().linf_dscaled;
            let consistency =
                dynamic.records.iter().map(|r| r.consistency_error.unwrap()).fold(0.0, f64::max);
            worst_gap = worst_gap.max(gap);
            worst_consistency = worst_consistency.max(consistency);
            let converged = dynamic.records.iter().chain(&fresh.records).all(|r| r.converged);
            if gap > 2.0 * eps || consistency > 1e-9 || !converged {
                failures.push(format!("seed {seed} omega {omega:.3}: gap {gap:.3e}, consistency {consistency:.3e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "worst D^-1 gap {worst_gap:.3e} (limit {:.0e}), worst consistency {worst_consistency:.3e}, {} failures{}, {:.1}s",
            2.0 * eps,
            failures.len(),
            first(&failures),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let g = chung_lu(100_000, 10.0, 2.5, 42);
    let cfg = BenchConfig {
        graph_id: "chung-lu-1e5".into(),
        problem: ProblemSpec::Ppr { alpha: PPR_ALPHA },
        eps: 1.0 / g.n() as f64,
        methods: vec![Method::Gs, Method::LocalGs, Method::Gd, Method::LocalGd],
        sources: sample_sources(&g, 50, 0),
        run: RunOptions::default(),
        parallel_sources: false,
        timing: false,
    };
    let records = bench(&g, &cfg).unwrap();
    let gs = speedup_ratio(&records[0], &records[1]).unwrap();
    let gd = speedup_ratio(&records[2], &records[3]).unwrap();
    let converged = records.iter().all(|r| r.converged);
    let elapsed = start.elapsed();
    outcome(
        gs >= 5.0 && gd >= 5.0 && converged && elapsed < Duration::from_secs(300),
        format!(
            "n {}, m {}, GS/LocalGS {gs:.1}x, GD/LocalGD {gd:.1}x (threshold 5x), {:.1}s (budget 300s)",
            g.n(),
            g.m(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let eps = 1e-8;
    let omega = optimal_omega(PPR_ALPHA).unwrap();
    let (mut sor_wins, mut ch_wins) = (0, 0);
    for seed in 0..50u64 {
        let g = erdos_renyi(100, 0.1, 900 + seed);
        let s = sample_sources(&g, 1, seed)[0];
        let sys = make_ppr_system(&g, PPR_ALPHA, s, eps, false).unwrap();
        let fast = local_sor(&sys, omega, Limits::LOCAL).unwrap().1.sweeps;
        let plain = local_sor(&sys, 1.0, Limits::LOCAL).unwrap().1.sweeps;
        sor_wins += (fast <= plain) as usize;

        let g = erdos_renyi(200, 0.05, 1900 + seed);
        let s = sample_sources(&g, 1, seed)[0];
        let sys = make_ppr_system(&g, PPR_ALPHA, s, eps, true).unwrap();
        let (_, ch) = local_ch(&sys, None, None, false).unwrap();
        let (_, gd) = local_gd(&sys, Limits::LOCAL, false).unwrap();
        ch_wins += (ch.converged && ch.sweeps < gd.sweeps) as usize;
    }
    outcome(
        sor_wins >= 40 && ch_wins >= 35,
        format!("LocalSOR(w*) <= LocalSOR(1) sweeps in {sor_wins}/50 (need 40), LocalCH < LocalGD in {ch_wins}/50 (need 35)"),
    )
}

fn criterion_8() -> Outcome {
    let mut problems = Vec::new();
    for n in [1, 2, 7, 100, 12345] {
        let mut e = vec![0.0; n];
        e[n / 2] = 1.0;
        if participation_ratio(&e).unwrap() != 1.0 / n as f64 {
            problems.push(format!("basis n={n}"));
        }
        if participation_ratio(&vec![0.3; n]).unwrap() != 1.0 {
            problems.push(format!("uniform n={n}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..300);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0) * rng.gen::<f64>().powi(4)).collect();
        let p = participation_ratio(&f).unwrap();
        if !(p >= 1.0 / n as f64 - 1e-15 && p <= 1.0 + 1e-15) {
            problems.push(format!("bounds n={n} p={p}"));
        }
        for c in [-2.0, 0.5, 10.0] {
            let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
            worst_scale = worst_scale.max((participation_ratio(&scaled).unwrap() - p).abs());
        }
    }
    if worst_scale > 1e-12 {
        problems.push(format!("scale drift {worst_scale:.3e}"));
    }
    outcome(
        problems.is_empty(),
        format!("exact basis/uniform values, 1000 random vectors, worst scale drift {worst_scale:.1e}{}", first(&problems)),
    )
}

fn run_cli_bench(graph: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_localdiff"))
        .args(["bench", "--graph", graph.to_str().unwrap(), "--eps", "1/n", "--num-sources", "20", "--seed", "5"])
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_9() -> Outcome {
    let graph = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/er2000.txt");
    let (a, b) = (run_cli_bench(&graph), run_cli_bench(&graph));
    let bench_identical = a == b && !a.is_empty();

    let g = chung_lu(20_000, 12.0, 2.5, 9);
    let s = sample_sources(&g, 5, 1)[4];
    let sys = make_ppr_system(&g, PPR_ALPHA, s, 1e-7, true).unwrap();
    let mut frontiers = [Vec::new(), Vec::new()];
    let mut states = Vec::new();
    for (k, parallel) in [false, true].into_iter().enumerate() {
        let log = &mut frontiers[k];
        let mut obs = |v: &SweepView| log.push(v.frontier.to_vec());
        states.push(local_gd_observed(&sys, Limits::LOCAL, parallel, Some(&mut obs)).unwrap().0);
    }
    let same_frontiers = frontiers[0] == frontiers[1];
    let widest = frontiers[0].iter().map(Vec::len).max().unwrap_or(0);
    let rel = states[0]
        .x
        .iter()
        .zip(&states[1].x)
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) })
        .fold(0.0, f64::max);
    outcome(
        bench_identical && same_frontiers && rel <= 1e-9,
        format!(
            "bench output identical: {bench_identical} ({} bytes); LocalGD frontiers identical: {same_frontiers} ({} sweeps, widest {widest}); max relative gap {rel:.1e}",
            a.len(),
            frontiers[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", criterion_1),
        ("invariant suite", criterion_2),
        ("bound suite", criterion_3),
        ("heat kernel correctness", criterion_4),
        ("dynamic equivalence", criterion_5),
        ("desk-scale speedup", criterion_6),
        ("acceleration trends", criterion_7),
        ("participation ratio", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&e))));
        failed += (!result.pass) as usize;
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} [{name}] {}", i + 1, result.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}
