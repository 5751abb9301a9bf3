use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use rayon::prelude::*;
use serde::Serialize;

use localdiff::dynamic::{format_events, parse_events, random_event_batches, run_snapshots, PprPair, SnapshotMode};
use localdiff::graph::generators::{chung_lu, erdos_renyi, to_edge_list};
use localdiff::graph::{load_edge_list, CsrGraph, LoadedGraph, NodeId};
use localdiff::metrics::{
    bench as run_bench, evaluate_bounds, participation_ratio, run_method, sample_sources, speedup_ratio, BenchConfig,
    BenchRecord, Method, ProblemSpec, RunOptions,
};
use localdiff::solver::{optimal_omega, Limits, SolveReport};

use crate::args::{
    BenchArgs, DynamicArgs, Format, GenArgs, GenKind, PratioArgs, ProblemArg, ProblemArgs, SolveArgs, VectorArg,
};
use crate::output::{csv, emit, json_lines, json_pretty};

fn load_graph(path: &Path) -> anyhow::Result<LoadedGraph> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_edge_list(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Graph identifier used in records: the file name, so output does not
/// depend on where the file lives.
fn graph_id(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned())
}

/// Resolves a precision token: a number, or `c/n`, `c/m`, `c/sqrt n`,
/// `c/sqrt m` where `c` defaults to 1.
pub fn resolve_eps(token: &str, g: &CsrGraph) -> anyhow::Result<f64> {
    let t = token.trim();
    let value = match t.split_once('/') {
        Some((num, den)) => {
            let num = num.trim();
            let num: f64 = if num.is_empty() { 1.0 } else { num.parse().with_context(|| format!("bad eps {token:?}"))? };
            let key: String = den.chars().filter(|c| !c.is_whitespace() && !matches!(c, '(' | ')')).collect();
            let den = match key.as_str() {
                "n" => g.n() as f64,
                "m" => g.m() as f64,
                "sqrtn" => (g.n() as f64).sqrt(),
                "sqrtm" => (g.m() as f64).sqrt(),
                other => other.parse().with_context(|| format!("bad eps {token:?}"))?,
            };
            num / den
        }
        None => t.parse().with_context(|| format!("bad eps {token:?}"))?,
    };
    ensure!(value > 0.0 && value.is_finite(), "eps must be positive and finite, got {value}");
    Ok(value)
}

fn resolve_omega(token: &str, spec: &ProblemSpec) -> anyhow::Result<f64> {
    if token.trim() == "auto" {
        let ProblemSpec::Ppr { alpha } = spec else {
            bail!("--omega auto is defined for --problem ppr only");
        };
        return Ok(optimal_omega(*alpha)?);
    }
    let omega: f64 = token.trim().parse().with_context(|| format!("bad omega {token:?}"))?;
    ensure!(omega > 0.0 && omega <= 2.0, "omega must be in (0, 2], got {omega}");
    Ok(omega)
}

fn problem_spec(a: &ProblemArgs) -> ProblemSpec {
    match a.problem {
        ProblemArg::Ppr => ProblemSpec::Ppr { alpha: a.alpha.unwrap_or(0.1) },
        ProblemArg::Katz => ProblemSpec::Katz { alpha: a.alpha },
        ProblemArg::Hk => ProblemSpec::Hk { tau: a.tau },
    }
}

fn lookup(loaded: &LoadedGraph, label: &str) -> anyhow::Result<NodeId> {
    loaded.lookup(label).with_context(|| format!("source {label:?} is not a node of the graph"))
}

fn sources(loaded: &LoadedGraph, labels: &[String], k: usize, seed: u64) -> anyhow::Result<Vec<NodeId>> {
    if labels.is_empty() {
        ensure!(k > 0, "--num-sources must be positive");
        Ok(sample_sources(&loaded.graph, k, seed))
    } else {
        labels.iter().map(|l| lookup(loaded, l)).collect()
    }
}

fn limits_for(method: Method, max_sweeps: Option<usize>) -> Option<Limits> {
    let base = if method.is_local() { Limits::LOCAL } else { Limits::GLOBAL };
    max_sweeps.map(|k| base.with_max_sweeps(k))
}

#[derive(Serialize)]
struct TopEntry<'a> {
    node: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    graph: String,
    n: usize,
    m: usize,
    source: &'a str,
    report: SolveReport,
    top: Vec<TopEntry<'a>>,
}

#[derive(Serialize)]
struct SolveRow<'a> {
    graph: &'a str,
    problem: &'a str,
    method: &'a str,
    source: &'a str,
    eps: f64,
    omega: Option<f64>,
    converged: bool,
    sweeps: usize,
    total_ops: u64,
    stop_ratio: f64,
    residual_support: usize,
    wall_seconds: f64,
}

pub fn solve(a: &SolveArgs, parallel: bool) -> anyhow::Result<bool> {
    let loaded = load_graph(&a.problem.graph)?;
    let g = &loaded.graph;
    let method: Method = a.method.parse()?;
    let eps = resolve_eps(&a.eps, g)?;
    let spec = problem_spec(&a.problem).resolve(g)?;
    let omega = resolve_omega(&a.omega, &spec)?;
    if omega != 1.0 && !matches!(method, Method::Sor | Method::LocalSor) {
        log::warn!("--omega only affects sor and local-sor; ignored for {method}");
    }
    let s = lookup(&loaded, &a.source)?;
    let sys = spec.build(g, s, eps, method)?;
    let opts = RunOptions { omega, limits: limits_for(method, a.max_sweeps), parallel };
    let (st, mut report) = run_method(&sys, method, opts)?;
    if method.is_local() {
        report.bounds = evaluate_bounds(&report, &sys).ok();
    }
    let converged = report.converged;
    let bytes = match a.out.format {
        Format::Json => {
            let f = st.estimate(&sys);
            let mut order: Vec<NodeId> = (0..f.len()).collect();
            order.sort_by(|&i, &j| f[j].total_cmp(&f[i]).then(i.cmp(&j)));
            let top = order
                .into_iter()
                .take(a.top)
                .map(|u| TopEntry { node: &loaded.labels[u], value: f[u] })
                .collect();
            json_pretty(&SolveOutput {
                graph: graph_id(&a.problem.graph),
                n: g.n(),
                m: g.m(),
                source: &a.source,
                report,
                top,
            })?
        }
        Format::Csv => {
            let gid = graph_id(&a.problem.graph);
            csv([SolveRow {
                graph: &gid,
                problem: &report.problem,
                method: &report.method,
                source: &a.source,
                eps: report.eps,
                omega: report.omega,
                converged: report.converged,
                sweeps: report.sweeps,
                total_ops: report.total_ops,
                stop_ratio: report.stop_ratio,
                residual_support: report.residual_support,
                wall_seconds: report.wall_seconds,
            }])?
        }
    };
    emit(a.out.output.as_deref(), &bytes)?;
    Ok(converged)
}

fn default_methods(spec: &ProblemSpec) -> Vec<Method> {
    match spec {
        ProblemSpec::Hk { .. } => vec![Method::Gs, Method::LocalGs],
        _ => vec![
            Method::Gs,
            Method::LocalGs,
            Method::Sor,
            Method::LocalSor,
            Method::Gd,
            Method::LocalGd,
            Method::Ch,
            Method::LocalCh,
        ],
    }
}

#[derive(Serialize)]
struct Speedup {
    global: String,
    local: String,
    speedup: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    source_labels: Vec<String>,
    speedups: Vec<Speedup>,
}

#[derive(Serialize)]
enum BenchLine<'a> {
    #[serde(rename = "record")]
    Record(&'a BenchRecord),
    #[serde(rename = "summary")]
    Summary(&'a BenchSummary),
}

#[derive(Serialize)]
struct BenchRow<'a> {
    graph: &'a str,
    problem: &'a str,
    method: &'a str,
    eps: f64,
    source: String,
    source_label: &'a str,
    total_ops: u64,
    sweeps: Option<usize>,
    converged: bool,
    wall_seconds: Option<f64>,
    speedup: Option<f64>,
}

fn speedups(records: &[BenchRecord]) -> anyhow::Result<Vec<Speedup>> {
    let mut out = Vec::new();
    for local in records {
        let m: Method = local.method.parse()?;
        if !m.is_local() {
            continue;
        }
        let global_name = m.counterpart().name();
        if let Some(global) = records.iter().find(|r| r.method == global_name) {
            out.push(Speedup {
                global: global.method.clone(),
                local: local.method.clone(),
                speedup: speedup_ratio(global, local)?,
            });
        }
    }
    Ok(out)
}

pub fn bench(a: &BenchArgs, parallel: bool) -> anyhow::Result<bool> {
    let loaded = load_graph(&a.problem.graph)?;
    let g = &loaded.graph;
    let eps = resolve_eps(&a.eps, g)?;
    let spec = problem_spec(&a.problem).resolve(g)?;
    let omega = resolve_omega(&a.omega, &spec)?;
    let methods = if a.methods.is_empty() {
        default_methods(&spec)
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?
    };
    let srcs = sources(&loaded, &a.sources, a.num_sources, a.seed)?;
    ensure!(!srcs.is_empty(), "graph has no non-isolated nodes to use as sources");
    let mut records = Vec::with_capacity(methods.len());
    for &method in &methods {
        let cfg = BenchConfig {
            graph_id: graph_id(&a.problem.graph),
            problem: spec,
            eps,
            methods: vec![method],
            sources: srcs.clone(),
            run: RunOptions { omega, limits: limits_for(method, a.max_sweeps), parallel },
            parallel_sources: parallel,
            timing: a.timing,
        };
        records.extend(run_bench(g, &cfg)?);
    }
    let converged = records.iter().all(|r| r.converged);
    let speedups = speedups(&records)?;
    let label = |u: NodeId| loaded.labels[u].as_str();
    let bytes = match a.out.format {
        Format::Json => {
            let summary = BenchSummary { source_labels: srcs.iter().map(|&u| label(u).to_string()).collect(), speedups };
            let lines = records.iter().map(BenchLine::Record).chain([BenchLine::Summary(&summary)]);
            json_lines(lines)?
        }
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &records {
                for s in &r.sources {
                    rows.push(BenchRow {
                        graph: &r.graph,
                        problem: &r.problem,
                        method: &r.method,
                        eps: r.eps,
                        source: s.source.to_string(),
                        source_label: label(s.source),
                        total_ops: s.total_ops,
                        sweeps: Some(s.sweeps),
                        converged: s.converged,
                        wall_seconds: s.wall_seconds,
                        speedup: None,
                    });
                }
                rows.push(BenchRow {
                    graph: &r.graph,
                    problem: &r.problem,
                    method: &r.method,
                    eps: r.eps,
                    source: "all".into(),
                    source_label: "",
                    total_ops: r.total_ops,
                    sweeps: None,
                    converged: r.converged,
                    wall_seconds: r.wall_seconds,
                    speedup: speedups.iter().find(|s| s.local == r.method).map(|s| s.speedup),
                });
            }
            csv(rows)?
        }
    };
    emit(a.out.output.as_deref(), &bytes)?;
    Ok(converged)
}

#[derive(Serialize)]
struct DynamicOutput<'a> {
    graph: String,
    source: &'a str,
    alpha: f64,
    eps: f64,
    omega: f64,
    batches: usize,
    dynamic: Vec<localdiff::dynamic::SnapshotRecord>,
    #[serde(rename = "static", skip_serializing_if = "Option::is_none")]
    from_scratch: Option<Vec<localdiff::dynamic::SnapshotRecord>>,
}

pub fn dynamic(a: &DynamicArgs) -> anyhow::Result<bool> {
    let loaded = load_graph(&a.graph)?;
    let g = &loaded.graph;
    let s = lookup(&loaded, &a.source)?;
    let eps = resolve_eps(&a.eps, g)?;
    let omega = resolve_omega(&a.omega, &ProblemSpec::Ppr { alpha: a.alpha })?;
    let file = File::open(&a.events).with_context(|| format!("opening {}", a.events.display()))?;
    let labels = loaded.label_index();
    let batches = parse_events(BufReader::new(file), Some(&labels))
        .with_context(|| format!("reading {}", a.events.display()))?;
    let limits = a.max_sweeps.map_or(Limits::LOCAL, |k| Limits::LOCAL.with_max_sweeps(k));
    let pair = PprPair::classic(g, s, a.alpha, eps, omega)?;
    let dynamic = run_snapshots(g, &batches, &pair, SnapshotMode::Dynamic, limits, a.check_consistency)?.records;
    let from_scratch = if a.compare {
        Some(run_snapshots(g, &batches, &pair, SnapshotMode::Static, limits, a.check_consistency)?.records)
    } else {
        None
    };
    let converged = dynamic.iter().chain(from_scratch.iter().flatten()).all(|r| r.converged);
    let bytes = match a.out.format {
        Format::Json => json_pretty(&DynamicOutput {
            graph: graph_id(&a.graph),
            source: &a.source,
            alpha: a.alpha,
            eps,
            omega,
            batches: batches.len(),
            dynamic,
            from_scratch,
        })?,
        Format::Csv => csv(dynamic.iter().chain(from_scratch.iter().flatten()))?,
    };
    emit(a.out.output.as_deref(), &bytes)?;
    Ok(converged)
}

#[derive(Serialize)]
struct SourceRatio<'a> {
    source: &'a str,
    ratio: f64,
    converged: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "PascalCase")]
struct RatioStats {
    min: f64,
    mean: f64,
    median: f64,
    max: f64,
}

#[derive(Serialize)]
struct PratioOutput<'a> {
    graph: String,
    problem: &'a str,
    vector: &'a str,
    eps: Option<f64>,
    count: usize,
    #[serde(flatten)]
    stats: RatioStats,
    per_source: Vec<SourceRatio<'a>>,
}

fn stats(values: &[f64]) -> RatioStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    RatioStats { min: v[0], mean: v.iter().sum::<f64>() / k as f64, median, max: v[k - 1] }
}

pub fn pratio(a: &PratioArgs, parallel: bool) -> anyhow::Result<bool> {
    let loaded = load_graph(&a.problem.graph)?;
    let g = &loaded.graph;
    let n = g.n();
    let spec = problem_spec(&a.problem).resolve(g)?;
    let (vector, eps, per_source) = match a.vector {
        VectorArg::Basis => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            ("basis", None, vec![SourceRatio { source: &loaded.labels[0], ratio: participation_ratio(&e)?, converged: true }])
        }
        VectorArg::Uniform => {
            let ratio = participation_ratio(&vec![1.0; n])?;
            ("uniform", None, vec![SourceRatio { source: "", ratio, converged: true }])
        }
        VectorArg::Solve => {
            let method: Method = a.method.parse()?;
            let eps = resolve_eps(&a.eps, g)?;
            let srcs = sources(&loaded, &a.sources, a.num_sources, a.seed)?;
            ensure!(!srcs.is_empty(), "graph has no non-isolated nodes to use as sources");
            let opts = RunOptions { omega: 1.0, limits: limits_for(method, a.max_sweeps), parallel };
            let one = |&s: &NodeId| -> anyhow::Result<SourceRatio> {
                let sys = spec.build(g, s, eps, method)?;
                let (st, rep) = run_method(&sys, method, opts)?;
                let ratio = participation_ratio(&st.estimate(&sys))?;
                Ok(SourceRatio { source: &loaded.labels[s], ratio, converged: rep.converged })
            };
            let rows = if parallel {
                srcs.par_iter().map(one).collect::<anyhow::Result<Vec<_>>>()?
            } else {
                srcs.iter().map(one).collect::<anyhow::Result<Vec<_>>>()?
            };
            ("solve", Some(eps), rows)
        }
    };
    let values: Vec<f64> = per_source.iter().map(|r| r.ratio).collect();
    let stats = stats(&values);
    let converged = per_source.iter().all(|r| r.converged);
    let bytes = match a.out.format {
        Format::Json => json_pretty(&PratioOutput {
            graph: graph_id(&a.problem.graph),
            problem: spec.name(),
            vector,
            eps,
            count: per_source.len(),
            stats,
            per_source,
        })?,
        Format::Csv => csv([stats])?,
    };
    emit(a.out.output.as_deref(), &bytes)?;
    Ok(converged)
}

pub fn gen(a: &GenArgs) -> anyhow::Result<()> {
    let text = match a.kind {
        GenKind::Er => to_edge_list(&erdos_renyi(a.n, a.p, a.seed)),
        GenKind::ChungLu => to_edge_list(&chung_lu(a.n, a.avg_degree, a.exponent, a.seed)),
        GenKind::Events => {
            let path = a.graph.as_deref().context("--kind events needs --graph")?;
            let loaded = load_graph(path)?;
            let batches = random_event_batches(&loaded.graph, a.batches, a.per_batch, a.seed);
            format_events(&batches, Some(&loaded.labels))
        }
    };
    emit(a.output.as_deref(), text.as_bytes())
}
