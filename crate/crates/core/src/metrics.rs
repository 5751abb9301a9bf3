//! Localization and cost measurements: participation ratio, error norms,
//! bound verdicts, and the multi-source benchmark driver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    default_katz_alpha, make_hk_system, make_katz_system, make_ppr_system, DiffusionSystem, KatzRegime, Problem,
};
use crate::global::{chebyshev, gauss_seidel, gradient_descent, hk_taylor_global, sor};
use crate::graph::{CsrGraph, NodeId};
use crate::local::{local_ch, local_gd, local_gs, local_hk_system, local_sor};
use crate::solver::{Limits, SolveReport, SolverState};
use crate::{Error, Result};

/// `p(f) = (Σ f_i²)² / (n Σ f_i⁴)`, in `[1/n, 1]`.
pub fn participation_ratio(f: &[f64]) -> Result<f64> {
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::InvalidParameter("participation ratio of a zero or non-finite vector".into()));
    }
    let (mut s2, mut s4) = (0.0, 0.0);
    for v in f {
        let q = (v / scale) * (v / scale);
        s2 += q;
        s4 += q * q;
    }
    Ok(s2 * s2 / (f.len() as f64 * s4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    /// `max_u |f̂_u - f*_u| / d_u` over nodes with `d_u > 0`.
    pub linf_dscaled: f64,
    pub l1: f64,
    pub l2: f64,
    /// Number of degree-0 coordinates left out of `linf_dscaled`.
    pub isolated: usize,
    /// `max |f̂_u - f*_u|` over degree-0 coordinates.
    pub isolated_linf: f64,
}

pub fn error_norms(f_hat: &[f64], f_star: &[f64], g: &CsrGraph) -> Result<ErrorNorms> {
    if f_hat.len() != f_star.len() {
        return Err(Error::LengthMismatch(f_hat.len(), f_star.len()));
    }
    if f_hat.len() != g.n() {
        return Err(Error::LengthMismatch(f_hat.len(), g.n()));
    }
    let mut out = ErrorNorms { linf_dscaled: 0.0, l1: 0.0, l2: 0.0, isolated: 0, isolated_linf: 0.0 };
    for (u, (a, b)) in f_hat.iter().zip(f_star).enumerate() {
        let e = (a - b).abs();
        out.l1 += e;
        out.l2 += e * e;
        match g.degree(u) {
            0 => {
                out.isolated += 1;
                out.isolated_linf = out.isolated_linf.max(e);
            }
            d => out.linf_dscaled = out.linf_dscaled.max(e / d as f64),
        }
    }
    out.l2 = out.l2.sqrt();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
    NotEvaluated,
}

/// Measured costs against the operation-count bounds of a local run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdicts {
    /// `Pass` when every applicable arm passes, `NotEvaluated` for
    /// non-converged runs.
    pub overall: Verdict,
    pub total_ops: u64,
    /// `1/(εα)` for PPR, `1/(ε(1 - α d_max))` for Katz, floored.
    pub ops_limit: Option<u64>,
    pub ops_arm: Verdict,
    /// `vol̄/(α γ̄) ln(C/ε)` with `C = 1/((1-α)|I_T|)`. Reported, not judged.
    pub log_bound: Option<f64>,
    /// `|I_T| = |supp(r^T)|`.
    pub residual_support: usize,
    /// `Σ vol(S_t) / Σ γ_t`.
    pub side_ratio: f64,
    /// `1/ε`.
    pub side_limit: f64,
    pub side_arm: Verdict,
}

/// Rounding guard when flooring real-valued limits to operation counts.
const LIMIT_SLACK: f64 = 1e-12;

/// Checks a local report against the operation-count bounds that hold for
/// its configuration. The count arm applies to monotone LocalGS, LocalSOR
/// with `ω = 1` and LocalGD on PPR or guaranteed-regime Katz; the side
/// condition applies to every monotone local run.
pub fn evaluate_bounds(report: &SolveReport, sys: &DiffusionSystem) -> Result<BoundVerdicts> {
    if report.problem != sys.problem.name() {
        return Err(Error::InvalidParameter(format!(
            "report is for {}, system is {}",
            report.problem,
            sys.problem.name()
        )));
    }
    if report.gamma_log.len() != report.sweeps || report.vol_log.len() != report.sweeps {
        return Err(Error::MissingLogs);
    }
    let eps = sys.eps;
    let vol_sum: u64 = report.vol_log.iter().sum();
    let gamma_sum: f64 = report.gamma_log.iter().sum();
    let side_ratio = if vol_sum == 0 { 0.0 } else { vol_sum as f64 / gamma_sum };
    let mut out = BoundVerdicts {
        overall: Verdict::NotEvaluated,
        total_ops: report.total_ops,
        ops_limit: None,
        ops_arm: Verdict::NotEvaluated,
        log_bound: None,
        residual_support: report.residual_support,
        side_ratio,
        side_limit: 1.0 / eps,
        side_arm: Verdict::NotEvaluated,
    };
    if !report.converged {
        return Ok(out);
    }

    let local = matches!(report.method.as_str(), "local-gs" | "local-sor" | "local-gd");
    let monotone = local && report.monotone_guaranteed && report.omega.is_none_or(|w| w <= 1.0);
    let unit_step = report.omega.is_none_or(|w| w == 1.0);
    let rate = match sys.problem {
        Problem::Ppr { alpha } => Some(alpha),
        Problem::Katz { alpha, regime: KatzRegime::Guaranteed, .. } => {
            Some(1.0 - alpha * sys.graph().max_degree() as f64)
        }
        _ => None,
    };

    out.ops_arm = Verdict::NotApplicable;
    if let (true, true, Some(rate)) = (monotone, unit_step, rate) {
        let limit = (1.0 / (eps * rate) * (1.0 + LIMIT_SLACK)).floor() as u64;
        out.ops_limit = Some(limit);
        out.ops_arm = if report.total_ops <= limit { Verdict::Pass } else { Verdict::Fail };
    }
    if let (Problem::Ppr { alpha }, true) = (&sys.problem, monotone) {
        if report.sweeps > 0 && report.residual_support > 0 && *alpha < 1.0 {
            let c = 1.0 / ((1.0 - alpha) * report.residual_support as f64);
            out.log_bound = Some(report.vol_bar() / (alpha * report.gamma_bar()) * (c / eps).ln());
        }
    }
    out.side_arm = if !monotone || rate.is_none() {
        Verdict::NotApplicable
    } else if side_ratio <= out.side_limit * (1.0 + LIMIT_SLACK) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    out.overall = if out.ops_arm == Verdict::Fail || out.side_arm == Verdict::Fail {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(out)
}

/// Solver selector shared by the benchmark driver and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gs,
    Sor,
    Gd,
    Ch,
    LocalGs,
    LocalSor,
    LocalGd,
    LocalCh,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Gs,
        Method::Sor,
        Method::Gd,
        Method::Ch,
        Method::LocalGs,
        Method::LocalSor,
        Method::LocalGd,
        Method::LocalCh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gs => "gs",
            Method::Sor => "sor",
            Method::Gd => "gd",
            Method::Ch => "ch",
            Method::LocalGs => "local-gs",
            Method::LocalSor => "local-sor",
            Method::LocalGd => "local-gd",
            Method::LocalCh => "local-ch",
        }
    }

    pub fn is_local(self) -> bool {
        matches!(self, Method::LocalGs | Method::LocalSor | Method::LocalGd | Method::LocalCh)
    }

    /// The global solver a local method localizes, and vice versa.
    pub fn counterpart(self) -> Method {
        match self {
            Method::Gs => Method::LocalGs,
            Method::Sor => Method::LocalSor,
            Method::Gd => Method::LocalGd,
            Method::Ch => Method::LocalCh,
            Method::LocalGs => Method::Gs,
            Method::LocalSor => Method::Sor,
            Method::LocalGd => Method::Gd,
            Method::LocalCh => Method::Ch,
        }
    }

    /// Gradient and Chebyshev methods need the symmetric operator.
    pub fn needs_symmetric(self) -> bool {
        matches!(self, Method::Gd | Method::Ch | Method::LocalGd | Method::LocalCh)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Problem family with its parameters, before a source is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Ppr { alpha: f64 },
    /// `alpha = None` uses `1/(‖A‖₂ + 1)`.
    Katz { alpha: Option<f64> },
    Hk { tau: f64 },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Ppr { .. } => "ppr",
            ProblemSpec::Katz { .. } => "katz",
            ProblemSpec::Hk { .. } => "hk",
        }
    }

    /// Fills in data-dependent defaults so that repeated builds agree.
    pub fn resolve(self, g: &CsrGraph) -> Result<Self> {
        Ok(match self {
            ProblemSpec::Katz { alpha: None } => ProblemSpec::Katz { alpha: Some(default_katz_alpha(g)?) },
            other => other,
        })
    }

    /// Builds the system for `method`. PPR uses the symmetrized form for
    /// methods that require it. Heat kernel supports only `gs` (Taylor
    /// propagation) and `local-gs` (stage push).
    pub fn build<'g>(&self, g: &'g CsrGraph, s: NodeId, eps: f64, method: Method) -> Result<DiffusionSystem<'g>> {
        match *self {
            ProblemSpec::Ppr { alpha } => make_ppr_system(g, alpha, s, eps, method.needs_symmetric()),
            ProblemSpec::Katz { alpha } => {
                let alpha = match alpha {
                    Some(a) => a,
                    None => default_katz_alpha(g)?,
                };
                make_katz_system(g, alpha, s, eps)
            }
            ProblemSpec::Hk { tau } => {
                if !matches!(method, Method::Gs | Method::LocalGs) {
                    return Err(Error::Unsupported(format!("heat kernel with method {method}")));
                }
                make_hk_system(g, tau, s, eps)
            }
        }
    }
}

/// Per-run knobs for [`run_method`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Relaxation for `sor` and `local-sor`; ignored otherwise.
    pub omega: f64,
    /// `None` uses the method default (`Limits::GLOBAL`, `Limits::LOCAL`,
    /// or the LocalCH sweep cap).
    pub limits: Option<Limits>,
    /// Parallel sweeps for the Jacobi-type methods.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { omega: 1.0, limits: None, parallel: false }
    }
}

pub fn run_method(sys: &DiffusionSystem, method: Method, opts: RunOptions) -> Result<(SolverState, SolveReport)> {
    let global = opts.limits.unwrap_or(Limits::GLOBAL);
    let local = opts.limits.unwrap_or(Limits::LOCAL);
    if let Problem::HeatKernel { .. } = sys.problem {
        return match method {
            Method::Gs => hk_taylor_global(sys, global),
            Method::LocalGs => Ok(local_hk_system(sys, local)),
            m => Err(Error::Unsupported(format!("heat kernel with method {m}"))),
        };
    }
    match method {
        Method::Gs => Ok(gauss_seidel(sys, global)),
        Method::Sor => sor(sys, opts.omega, global),
        Method::Gd => gradient_descent(sys, global, opts.parallel),
        Method::Ch => chebyshev(sys, None, global, opts.parallel),
        Method::LocalGs => Ok(local_gs(sys, local)),
        Method::LocalSor => local_sor(sys, opts.omega, local),
        Method::LocalGd => local_gd(sys, local, opts.parallel),
        Method::LocalCh => local_ch(sys, None, opts.limits, opts.parallel),
    }
}

/// Picks `k` non-isolated sources spread over the degree distribution:
/// nodes are sorted by degree, split into `k` equal rank buckets, and one
/// node is drawn from each bucket. Returns every candidate when `k` is at
/// least their number.
pub fn sample_sources(g: &CsrGraph, k: usize, seed: u64) -> Vec<NodeId> {
    let mut nodes: Vec<NodeId> = (0..g.n()).filter(|&u| g.degree(u) > 0).collect();
    nodes.sort_by_key(|&u| (g.degree(u), u));
    if k >= nodes.len() {
        return nodes;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| {
            let lo = i * nodes.len() / k;
            let hi = (i + 1) * nodes.len() / k;
            nodes[rng.gen_range(lo..hi)]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source: NodeId,
    pub total_ops: u64,
    pub sweeps: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_seconds: Option<f64>,
}

/// One method's cost over a set of sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub graph: String,
    pub problem: String,
    pub method: String,
    pub eps: f64,
    pub total_ops: u64,
    /// Present only when timing was requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_seconds: Option<f64>,
    /// Whether every source converged.
    pub converged: bool,
    pub sources: Vec<SourceRecord>,
}

/// `T_global / T_local` on summed operation counts.
pub fn speedup_ratio(global: &BenchRecord, local: &BenchRecord) -> Result<f64> {
    let mismatch = |what: &str| Err(Error::MismatchedRecords(what.to_string()));
    if global.graph != local.graph {
        return mismatch("graph");
    }
    if global.problem != local.problem {
        return mismatch("problem");
    }
    if global.eps != local.eps {
        return mismatch("eps");
    }
    if !global.sources.iter().map(|s| s.source).eq(local.sources.iter().map(|s| s.source)) {
        return mismatch("sources");
    }
    if local.total_ops == 0 {
        return Err(Error::InvalidParameter("local record has zero operations".into()));
    }
    Ok(global.total_ops as f64 / local.total_ops as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub graph_id: String,
    pub problem: ProblemSpec,
    pub eps: f64,
    pub methods: Vec<Method>,
    pub sources: Vec<NodeId>,
    pub run: RunOptions,
    /// Solve sources concurrently on the rayon pool.
    pub parallel_sources: bool,
    /// Record wall-clock seconds.
    pub timing: bool,
}

/// Runs every method on every source, one record per method in the order
/// given. Records are identical whether sources run in parallel or not,
/// apart from wall times.
pub fn bench(g: &CsrGraph, cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let problem = cfg.problem.resolve(g)?;
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let one = |&s: &NodeId| -> Result<SourceRecord> {
                let t0 = Instant::now();
                let sys = problem.build(g, s, cfg.eps, method)?;
                let (_, rep) = run_method(&sys, method, cfg.run)?;
                Ok(SourceRecord {
                    source: s,
                    total_ops: rep.total_ops,
                    sweeps: rep.sweeps,
                    converged: rep.converged,
                    wall_seconds: cfg.timing.then(|| t0.elapsed().as_secs_f64()),
                })
            };
            let sources: Vec<SourceRecord> = if cfg.parallel_sources {
                cfg.sources.par_iter().map(one).collect::<Result<_>>()?
            } else {
                cfg.sources.iter().map(one).collect::<Result<_>>()?
            };
            Ok(BenchRecord {
                graph: cfg.graph_id.clone(),
                problem: problem.name().to_string(),
                method: method.name().to_string(),
                eps: cfg.eps,
                total_ops: sources.iter().map(|s| s.total_ops).sum(),
                wall_seconds: cfg.timing.then(|| start.elapsed().as_secs_f64()),
                converged: sources.iter().all(|s| s.converged),
                sources,
            })
        })
        .collect()
}
