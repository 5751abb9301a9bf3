//! Diffusion problems written as linear systems `Q x = b` with `Q = I - βP`.
//!
//! All solvers work on the stored coordinates of a [`DiffusionSystem`]. For
//! PPR in symmetrized form the stored estimate and residual are the
//! `D^{1/2}`-scaled ones, so the working operator is `I - (1-α) A D^{-1}` and
//! the activation rule stays `|r_u| ≥ ε α d_u`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{CsrGraph, NodeId};

/// Largest system handed to the dense oracle.
pub const DENSE_LIMIT: usize = 2000;

/// Iterations used when a Katz system estimates `‖A‖₂` itself.
pub const SPECTRAL_ITERS: usize = 5000;

/// The propagation matrix `P` of the working operator. Columns of `A D^{-1}`
/// at degree-0 nodes are zero.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    /// `A D^{-1}`.
    RandomWalk,
    /// `A`.
    Adjacency,
    /// `P_vu = d_u^{β'-1} d_v^{-β'}`.
    Generalized { exponent: f64 },
    /// Stage-expanded `S_{N+1} ⊗ A D^{-1}` with `S[k+1, k] = 1/(k+1)`;
    /// coordinate `k * n + u` is node `u` at stage `k`.
    HeatKernel { stages: usize },
}

#[derive(Debug, Clone)]
pub struct OperatorQ<'g> {
    pub graph: &'g CsrGraph,
    pub beta: f64,
    pub kind: Propagation,
    // d_u^{β'-1} and d_v^{-β'} for the generalized form, zero at degree 0.
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
}

impl<'g> OperatorQ<'g> {
    pub fn new(graph: &'g CsrGraph, beta: f64, kind: Propagation) -> Self {
        let (col_scale, row_scale) = match kind {
            Propagation::Generalized { exponent } => {
                let pw = |u: usize, e: f64| {
                    let d = graph.degree(u) as f64;
                    if d == 0.0 {
                        0.0
                    } else {
                        d.powf(e)
                    }
                };
                (
                    (0..graph.n()).map(|u| pw(u, exponent - 1.0)).collect(),
                    (0..graph.n()).map(|u| pw(u, -exponent)).collect(),
                )
            }
            _ => (Vec::new(), Vec::new()),
        };
        Self { graph, beta, kind, col_scale, row_scale }
    }

    /// Number of coordinates of `x`.
    pub fn dim(&self) -> usize {
        match self.kind {
            Propagation::HeatKernel { stages } => (stages + 1) * self.graph.n(),
            _ => self.graph.n(),
        }
    }

    /// `(stage, node)` of a coordinate.
    #[inline]
    pub fn split(&self, c: usize) -> (usize, NodeId) {
        let n = self.graph.n();
        (c / n, c % n)
    }

    /// Arc touches charged for updating coordinate `c`.
    #[inline]
    pub fn cost(&self, c: usize) -> usize {
        self.graph.degree(c % self.graph.n())
    }

    /// Calls `f(t, β P_tc)` for every nonzero entry of column `c` of `βP`.
    #[inline]
    pub fn for_each_target(&self, c: usize, mut f: impl FnMut(usize, f64)) {
        let g = self.graph;
        match self.kind {
            Propagation::RandomWalk => {
                let d = g.degree(c);
                if d > 0 {
                    let w = self.beta / d as f64;
                    g.neighbors(c).iter().for_each(|&v| f(v, w));
                }
            }
            Propagation::Adjacency => {
                let w = self.beta;
                g.neighbors(c).iter().for_each(|&v| f(v, w));
            }
            Propagation::Generalized { .. } => {
                let w = self.beta * self.col_scale[c];
                g.neighbors(c).iter().for_each(|&v| f(v, w * self.row_scale[v]));
            }
            Propagation::HeatKernel { stages } => {
                let n = g.n();
                let (k, u) = (c / n, c % n);
                let d = g.degree(u);
                if k < stages && d > 0 {
                    let w = self.beta / ((k + 1) as f64 * d as f64);
                    let base = (k + 1) * n;
                    g.neighbors(u).iter().for_each(|&v| f(base + v, w));
                }
            }
        }
    }

    /// `(βP x)_c`, gathered over row `c`.
    #[inline]
    pub fn row_dot(&self, c: usize, x: &[f64]) -> f64 {
        let g = self.graph;
        match self.kind {
            Propagation::RandomWalk => {
                self.beta * g.neighbors(c).iter().map(|&u| x[u] / g.degree(u) as f64).sum::<f64>()
            }
            Propagation::Adjacency => self.beta * g.neighbors(c).iter().map(|&u| x[u]).sum::<f64>(),
            Propagation::Generalized { .. } => {
                self.beta
                    * self.row_scale[c]
                    * g.neighbors(c).iter().map(|&u| self.col_scale[u] * x[u]).sum::<f64>()
            }
            Propagation::HeatKernel { .. } => {
                let n = g.n();
                let (k, v) = (c / n, c % n);
                if k == 0 {
                    return 0.0;
                }
                let base = (k - 1) * n;
                let s: f64 = g.neighbors(v).iter().map(|&u| x[base + u] / g.degree(u) as f64).sum();
                self.beta * s / k as f64
            }
        }
    }

    /// `y = Q x`. The parallel form computes the same per-row sums in the
    /// same order, so both paths agree bitwise.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64], parallel: bool) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        if parallel {
            use rayon::prelude::*;
            y.par_iter_mut().enumerate().for_each(|(c, yc)| *yc = x[c] - self.row_dot(c, x));
        } else {
            for (c, yc) in y.iter_mut().enumerate() {
                *yc = x[c] - self.row_dot(c, x);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y, false);
        y
    }

    /// `max_u ‖P e_u‖₁` (without the factor β).
    pub fn p_max(&self) -> f64 {
        let g = self.graph;
        (0..g.n())
            .map(|u| match self.kind {
                Propagation::RandomWalk | Propagation::HeatKernel { .. } => {
                    if g.degree(u) > 0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Propagation::Adjacency => g.degree(u) as f64,
                Propagation::Generalized { .. } => {
                    self.col_scale[u] * g.neighbors(u).iter().map(|&v| self.row_scale[v]).sum::<f64>()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Whether the Katz nonnegativity and operation-count guarantees apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KatzRegime {
    /// `α < 1/d_max`.
    Guaranteed,
    /// `1/d_max ≤ α < 1/λ̂`: the series converges but pushes may not be
    /// monotone.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Ppr { alpha: f64 },
    Katz { alpha: f64, lambda_hat: f64, regime: KatzRegime },
    HeatKernel { tau: f64, stages: usize },
    Generalized { alpha: f64, exponent: f64 },
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Ppr { .. } => "ppr",
            Problem::Katz { .. } => "katz",
            Problem::HeatKernel { .. } => "hk",
            Problem::Generalized { .. } => "generalized",
        }
    }
}

/// Maps stored coordinates to the diffusion vector `f̂`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackTransform {
    Identity,
    /// `f̂ = x - e_s`.
    SubtractSource(NodeId),
    /// `f̂ = c x`.
    Scale(f64),
    /// `f̂ = Σ_k w_k x_k` over stage blocks.
    StageSum(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DiffusionSystem<'g> {
    pub op: OperatorQ<'g>,
    /// Nonzeros of `b` in stored coordinates, ascending by index.
    pub b: Vec<(usize, f64)>,
    /// Activation threshold per coordinate; `f64::INFINITY` means never
    /// active.
    pub theta: Vec<f64>,
    pub problem: Problem,
    pub symmetrized: bool,
    pub back: BackTransform,
    pub eps: f64,
    pub source: Option<NodeId>,
}

impl<'g> DiffusionSystem<'g> {
    pub fn graph(&self) -> &'g CsrGraph {
        self.op.graph
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn b_dense(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        for &(c, v) in &self.b {
            b[c] = v;
        }
        b
    }

    pub fn b_l1(&self) -> f64 {
        self.b.iter().map(|&(_, v)| v.abs()).sum()
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.problem {
            Problem::Ppr { alpha } | Problem::Katz { alpha, .. } | Problem::Generalized { alpha, .. } => {
                Some(alpha)
            }
            Problem::HeatKernel { .. } => None,
        }
    }

    /// `b - Q x`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.b_dense();
        let qx = self.op.apply(x);
        r.iter_mut().zip(qx).for_each(|(ri, q)| *ri -= q);
        r
    }

    /// `max_c |r_c| / θ_c` over coordinates that can be active.
    pub fn stop_ratio(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(&self.theta)
            .filter(|(_, t)| t.is_finite())
            .map(|(ri, t)| ri.abs() / t)
            .fold(0.0, f64::max)
    }

    pub fn back_transform(&self, x: &[f64]) -> Vec<f64> {
        match &self.back {
            BackTransform::Identity => x.to_vec(),
            BackTransform::SubtractSource(s) => {
                let mut f = x.to_vec();
                f[*s] -= 1.0;
                f
            }
            BackTransform::Scale(c) => x.iter().map(|v| c * v).collect(),
            BackTransform::StageSum(w) => {
                let n = self.graph().n();
                let mut f = vec![0.0; n];
                for (k, wk) in w.iter().enumerate() {
                    for (fu, xu) in f.iter_mut().zip(&x[k * n..(k + 1) * n]) {
                        *fu += wk * xu;
                    }
                }
                f
            }
        }
    }

    /// Whether local pushes keep residuals nonnegative with `ω ≤ 1`.
    pub fn monotone_regime(&self) -> bool {
        match self.problem {
            Problem::Katz { regime, .. } => regime == KatzRegime::Guaranteed,
            Problem::Generalized { .. } => self.b.iter().all(|&(_, v)| v >= 0.0),
            _ => true,
        }
    }
}

fn check_source(g: &CsrGraph, s: NodeId) -> Result<()> {
    if s >= g.n() {
        return Err(Error::NodeOutOfRange { node: s, n: g.n() });
    }
    if g.degree(s) == 0 {
        return Err(Error::IsolatedSource(s));
    }
    Ok(())
}

fn check_eps(g: &CsrGraph, s: NodeId, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if eps > 1.0 / g.degree(s) as f64 {
        warn!("eps = {eps} exceeds 1/d_s = {}; the source may never be pushed", 1.0 / g.degree(s) as f64);
    }
    Ok(())
}

fn degree_thresholds(g: &CsrGraph, factor: f64) -> Vec<f64> {
    (0..g.n())
        .map(|u| match g.degree(u) {
            0 => f64::INFINITY,
            d => factor * d as f64,
        })
        .collect()
}

/// Personalized PageRank: `(I - (1-α) A D^{-1}) x = α e_s`, `θ_u = ε α d_u`.
///
/// With `symmetrized` the system is the `D^{-1/2} A D^{-1/2}` form held in
/// `D^{1/2}`-scaled coordinates (see the module docs).
pub fn make_ppr_system(g: &CsrGraph, alpha: f64, s: NodeId, eps: f64, symmetrized: bool) -> Result<DiffusionSystem<'_>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
    }
    check_source(g, s)?;
    check_eps(g, s, eps)?;
    let op = OperatorQ::new(g, 1.0 - alpha, Propagation::RandomWalk);
    debug_assert!(op.beta * op.p_max() < 1.0);
    Ok(DiffusionSystem {
        op,
        b: vec![(s, alpha)],
        theta: degree_thresholds(g, eps * alpha),
        problem: Problem::Ppr { alpha },
        symmetrized,
        back: BackTransform::Identity,
        eps,
        source: Some(s),
    })
}

/// The default Katz parameter `1/(λ̂ + 1)`.
pub fn default_katz_alpha(g: &CsrGraph) -> Result<f64> {
    Ok(1.0 / (g.spectral_norm_estimate(SPECTRAL_ITERS, 0)? + 1.0))
}

/// Katz centrality: `(I - α A) x = e_s`, `θ_u = ε d_u`, `f̂ = x - e_s`.
pub fn make_katz_system(g: &CsrGraph, alpha: f64, s: NodeId, eps: f64) -> Result<DiffusionSystem<'_>> {
    check_source(g, s)?;
    check_eps(g, s, eps)?;
    let lambda_hat = g.spectral_norm_estimate(SPECTRAL_ITERS, 0)?;
    // λ̂ approaches ‖A‖₂ from below, so values within rounding of the
    // boundary are rejected too.
    if !(alpha > 0.0) || alpha * lambda_hat >= 1.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "Katz alpha must be in (0, 1/λ̂) with λ̂ = {lambda_hat}, got {alpha}"
        )));
    }
    let op = OperatorQ::new(g, alpha, Propagation::Adjacency);
    let regime = if alpha * op.p_max() < 1.0 { KatzRegime::Guaranteed } else { KatzRegime::Heuristic };
    if regime == KatzRegime::Heuristic {
        warn!("Katz alpha = {alpha} is at least 1/d_max; residual monotonicity is not guaranteed");
    }
    Ok(DiffusionSystem {
        op,
        b: vec![(s, 1.0)],
        theta: degree_thresholds(g, eps),
        problem: Problem::Katz { alpha, lambda_hat, regime },
        symmetrized: false,
        back: BackTransform::SubtractSource(s),
        eps,
        source: Some(s),
    })
}

/// Poisson weights `e^{-τ} τ^k / k!` for `k = 0..=kmax`, computed in log space.
pub fn poisson_weights(tau: f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut lt = -tau;
    let ln_tau = tau.ln();
    for k in 0..=kmax {
        if k > 0 {
            lt += ln_tau - (k as f64).ln();
        }
        out.push(lt.exp());
    }
    out
}

/// Smallest `N` whose Taylor tail `e^{-τ} Σ_{k>N} τ^k/k!` is at most `eps/2`,
/// capped at `2τ + 40`.
pub fn hk_stage_count(tau: f64, eps: f64) -> usize {
    let cap = (2.0 * tau + 40.0).floor() as usize;
    let kmax = cap + 200;
    let w = poisson_weights(tau, kmax);
    // Suffix sums from the far end so small tails are summed accurately.
    let mut tail = vec![0.0; kmax + 2];
    for k in (0..=kmax).rev() {
        tail[k] = tail[k + 1] + w[k];
    }
    (0..=cap).find(|&n| tail[n + 1] <= eps / 2.0).unwrap_or(cap)
}

/// `W_k = e^{-τ} Σ_{j=0}^{N-k} τ^{k+j} k!/(k+j)!`: the ℓ1 mass that one unit
/// of stage-`k` residual would still contribute to `f̂`.
pub fn hk_stage_amplification(tau: f64, stages: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(stages + 1);
    for k in 0..=stages {
        // e^{-τ} τ^k, then multiply by τ/(k+j) for each further stage.
        let mut term = (-tau + k as f64 * tau.ln()).exp();
        let mut sum = term;
        for j in 1..=(stages - k) {
            term *= tau / (k + j) as f64;
            sum += term;
        }
        out.push(sum);
    }
    out
}

/// Heat kernel `f = e^{-τ} Σ_k τ^k/k! (A D^{-1})^k e_s` as the stage-expanded
/// system `(I - S_{N+1} ⊗ A D^{-1}) v = e_1 ⊗ e_s`.
///
/// Stage-`k` coordinates activate at `ε d_u / (vol(V) (N+1) W_k)` where
/// `W_k` is the stage amplification from [`hk_stage_amplification`]. Each
/// inactive coordinate then leaves at most `ε d_u / (vol(V) (N+1))` of ℓ1
/// error, so the total stays below `ε` plus the truncation tail.
pub fn make_hk_system(g: &CsrGraph, tau: f64, s: NodeId, eps: f64) -> Result<DiffusionSystem<'_>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    check_source(g, s)?;
    check_eps(g, s, eps)?;
    let stages = hk_stage_count(tau, eps);
    let op = OperatorQ::new(g, 1.0, Propagation::HeatKernel { stages });
    let amp = hk_stage_amplification(tau, stages);
    let n = g.n();
    let mut theta = Vec::with_capacity(op.dim());
    for wk in &amp {
        let factor = hk_threshold_factor(eps, stages, *wk, g.total_volume());
        theta.extend((0..n).map(|u| match g.degree(u) {
            0 => f64::INFINITY,
            d => factor * d as f64,
        }));
    }
    let weights = (0..=stages).map(|k| (-tau + k as f64 * tau.ln()).exp()).collect();
    Ok(DiffusionSystem {
        op,
        b: vec![(s, 1.0)],
        theta,
        problem: Problem::HeatKernel { tau, stages },
        symmetrized: false,
        back: BackTransform::StageSum(weights),
        eps,
        source: Some(s),
    })
}

fn hk_threshold_factor(eps: f64, stages: usize, amplification: f64, volume: usize) -> f64 {
    eps / (volume as f64 * (stages + 1) as f64 * amplification)
}

/// Generalized propagation `(I - (1-α) D^{-β'} A D^{β'-1}) y = source`,
/// reported as `f̂ = α y`. Thresholds are `ε d_u^{1-β'}`.
pub fn make_generalized_system<'g>(
    g: &'g CsrGraph,
    alpha: f64,
    exponent: f64,
    source: &[f64],
    eps: f64,
) -> Result<DiffusionSystem<'g>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if !(0.0..=1.0).contains(&exponent) {
        return Err(Error::InvalidParameter(format!("beta must be in [0, 1], got {exponent}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if source.len() != g.n() {
        return Err(Error::LengthMismatch(source.len(), g.n()));
    }
    if source.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("source has non-finite entries".into()));
    }
    let op = OperatorQ::new(g, 1.0 - alpha, Propagation::Generalized { exponent });
    let theta = (0..g.n())
        .map(|u| match g.degree(u) {
            0 => f64::INFINITY,
            d => eps * (d as f64).powf(1.0 - exponent),
        })
        .collect();
    let b = source.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
    Ok(DiffusionSystem {
        op,
        b,
        theta,
        problem: Problem::Generalized { alpha, exponent },
        symmetrized: false,
        back: BackTransform::Scale(alpha),
        eps,
        source: None,
    })
}

/// Eigenvalue bounds `[μ, L]` of `Q` used by Chebyshev methods.
pub fn chebyshev_bounds(sys: &DiffusionSystem) -> Result<(f64, f64)> {
    match sys.problem {
        Problem::Ppr { alpha } | Problem::Generalized { alpha, .. } => Ok((alpha, 2.0 - alpha)),
        Problem::Katz { alpha, lambda_hat, .. } => Ok((1.0 - alpha * lambda_hat, 1.0 + alpha * lambda_hat)),
        Problem::HeatKernel { .. } => Err(Error::Unsupported("Chebyshev for heat kernel".into())),
    }
}

/// Katz bounds from the maximum degree, `|λ(A)| ≤ d_max`.
pub fn chebyshev_bounds_max_degree(sys: &DiffusionSystem) -> Result<(f64, f64)> {
    match sys.problem {
        Problem::Katz { alpha, .. } => {
            let a = alpha * sys.graph().max_degree() as f64;
            if a >= 1.0 {
                return Err(Error::InvalidParameter(format!("alpha * d_max = {a} >= 1")));
            }
            Ok((1.0 - a, 1.0 + a))
        }
        _ => chebyshev_bounds(sys),
    }
}

/// Solves the system directly and returns the back-transformed `f`.
pub fn dense_solve(sys: &DiffusionSystem) -> Result<Vec<f64>> {
    Ok(sys.back_transform(&dense_solve_stored(sys)?))
}

/// Direct solution in stored coordinates.
///
/// The symmetrized PPR system is factorized in its symmetric form and mapped
/// back with `D^{1/2}`. Heat-kernel systems are block unit lower triangular
/// and are solved by forward substitution over stages.
pub fn dense_solve_stored(sys: &DiffusionSystem) -> Result<Vec<f64>> {
    let g = sys.graph();
    let n = g.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { dim: n, limit: DENSE_LIMIT });
    }
    if let Propagation::HeatKernel { stages } = sys.op.kind {
        let m = dense_random_walk(g);
        let b = sys.b_dense();
        let mut x = vec![0.0; sys.dim()];
        let mut prev = DVector::from_column_slice(&b[..n]);
        x[..n].copy_from_slice(prev.as_slice());
        for k in 1..=stages {
            let next = (&m * &prev) / k as f64 + DVector::from_column_slice(&b[k * n..(k + 1) * n]);
            x[k * n..(k + 1) * n].copy_from_slice(next.as_slice());
            prev = next;
        }
        return Ok(x);
    }
    let beta = sys.op.beta;
    let p = if sys.symmetrized {
        let mut a = dense_adjacency(g);
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|u| match g.degree(u) {
                0 => 0.0,
                d => 1.0 / (d as f64).sqrt(),
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        a
    } else {
        match sys.op.kind {
            Propagation::RandomWalk => dense_random_walk(g),
            Propagation::Adjacency => dense_adjacency(g),
            Propagation::Generalized { exponent } => dense_generalized(g, exponent),
            Propagation::HeatKernel { .. } => unreachable!(),
        }
    };
    let q = DMatrix::identity(n, n) - p * beta;
    let mut b = DVector::from_vec(sys.b_dense());
    if sys.symmetrized {
        for u in 0..n {
            let d = g.degree(u);
            b[u] = if d == 0 { 0.0 } else { b[u] / (d as f64).sqrt() };
        }
    }
    let mut x = q.lu().solve(&b).ok_or(Error::Singular)?;
    if sys.symmetrized {
        for u in 0..n {
            x[u] *= (g.degree(u) as f64).sqrt();
        }
    }
    Ok(x.as_slice().to_vec())
}

fn dense_adjacency(g: &CsrGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for (u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

fn dense_random_walk(g: &CsrGraph) -> DMatrix<f64> {
    let mut a = dense_adjacency(g);
    for u in 0..g.n() {
        let d = g.degree(u);
        if d > 0 {
            a.column_mut(u).scale_mut(1.0 / d as f64);
        }
    }
    a
}

fn dense_generalized(g: &CsrGraph, exponent: f64) -> DMatrix<f64> {
    let mut a = dense_adjacency(g);
    for (u, v) in g.edges() {
        for (row, col) in [(u, v), (v, u)] {
            let dc = g.degree(col) as f64;
            let dr = g.degree(row) as f64;
            a[(row, col)] = dc.powf(exponent - 1.0) * dr.powf(-exponent);
        }
    }
    a
}

/// Truncated series `Σ_{k≤K} c_k M^k s` evaluated by repeated sparse
/// products straight from the adjacency lists.
///
/// Katz starts at `k = 1` so the result is comparable to `x - e_s`; the
/// generalized system is reported as `α (I - (1-α)P)^{-1} source`.
pub fn series_oracle(sys: &DiffusionSystem, k_max: usize) -> Vec<f64> {
    let g = sys.graph();
    let n = g.n();
    let deg = |u: usize| g.degree(u) as f64;
    let rw = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for u in 0..n {
            if v[u] != 0.0 {
                for &w in g.neighbors(u) {
                    out[w] += v[u] / deg(u);
                }
            }
        }
        out
    };
    let adj = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for u in 0..n {
            for &w in g.neighbors(u) {
                out[w] += v[u];
            }
        }
        out
    };
    let mut f = vec![0.0; n];
    let add = |f: &mut Vec<f64>, c: f64, v: &[f64]| f.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
    let mut s = vec![0.0; n];
    match sys.problem {
        Problem::Ppr { alpha } => {
            s[sys.source.expect("ppr has a source")] = 1.0;
            let mut c = alpha;
            for _ in 0..=k_max {
                add(&mut f, c, &s);
                s = rw(&s);
                c *= 1.0 - alpha;
            }
        }
        Problem::Katz { alpha, .. } => {
            s[sys.source.expect("katz has a source")] = 1.0;
            let mut c = 1.0;
            for _ in 1..=k_max {
                s = adj(&s);
                c *= alpha;
                add(&mut f, c, &s);
            }
        }
        Problem::HeatKernel { tau, .. } => {
            s[sys.source.expect("hk has a source")] = 1.0;
            let w = poisson_weights(tau, k_max);
            for wk in w {
                add(&mut f, wk, &s);
                s = rw(&s);
            }
        }
        Problem::Generalized { alpha, exponent } => {
            for &(c, v) in &sys.b {
                s[c] = v;
            }
            let mut c = alpha;
            for _ in 0..=k_max {
                add(&mut f, c, &s);
                let mut next = vec![0.0; n];
                for u in 0..n {
                    if s[u] != 0.0 {
                        for &w in g.neighbors(u) {
                            next[w] += s[u] * deg(u).powf(exponent - 1.0) * deg(w).powf(-exponent);
                        }
                    }
                }
                s = next;
                c *= 1.0 - alpha;
            }
        }
    }
    f
}
