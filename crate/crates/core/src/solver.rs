//! State, limits, reports and the sweep-delimited frontier shared by all
//! solvers.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionSystem;
use crate::metrics::BoundVerdicts;

/// Estimate/residual pair plus the per-sweep logs of a local diffusion
/// process.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub sweeps: usize,
    pub ops: u64,
    pub gamma_log: Vec<f64>,
    pub vol_log: Vec<u64>,
}

impl SolverState {
    /// `x = 0`, `r = b`.
    pub fn initial(sys: &DiffusionSystem) -> Self {
        Self {
            x: vec![0.0; sys.dim()],
            r: sys.b_dense(),
            sweeps: 0,
            ops: 0,
            gamma_log: Vec::new(),
            vol_log: Vec::new(),
        }
    }

    /// Back-transformed estimate `f̂`.
    pub fn estimate(&self, sys: &DiffusionSystem) -> Vec<f64> {
        sys.back_transform(&self.x)
    }

    /// Largest entry of `|r - (b - Q x)|`.
    pub fn consistency_error(&self, sys: &DiffusionSystem) -> f64 {
        sys.residual(&self.x).iter().zip(&self.r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_sweeps: usize,
    pub max_seconds: f64,
}

impl Limits {
    pub const GLOBAL: Limits = Limits { max_sweeps: 10_000, max_seconds: 600.0 };
    pub const LOCAL: Limits = Limits { max_sweeps: 1_000_000, max_seconds: 600.0 };

    pub fn with_max_sweeps(self, max_sweeps: usize) -> Self {
        Self { max_sweeps, ..self }
    }
}

/// Outcome of a solver run. Operation counts are arc touches; a run that
/// stops at a limit is reported with `converged = false` rather than as an
/// error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub problem: String,
    pub eps: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub total_ops: u64,
    pub gamma_log: Vec<f64>,
    pub vol_log: Vec<u64>,
    /// `‖r‖₁` at the start of every sweep and at exit.
    pub residual_l1_trace: Vec<f64>,
    /// Smallest residual entry observed after any update.
    pub min_residual: f64,
    /// `|supp(r)|` at exit.
    pub residual_support: usize,
    /// `max_u |r_u| / θ_u` at exit.
    pub stop_ratio: f64,
    pub omega: Option<f64>,
    /// Whether nonnegativity and ℓ1-monotonicity are guaranteed for this run.
    pub monotone_guaranteed: bool,
    pub diverged: bool,
    pub timed_out: bool,
    /// `‖r‖₁` held at degree-0 coordinates, which can never be pushed.
    pub parked_mass: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds: Option<BoundVerdicts>,
}

/// Local solvers report in the same shape as global ones.
pub type LocalReport = SolveReport;

impl SolveReport {
    pub fn gamma_bar(&self) -> f64 {
        if self.sweeps == 0 {
            0.0
        } else {
            self.gamma_log.iter().sum::<f64>() / self.sweeps as f64
        }
    }

    pub fn vol_bar(&self) -> f64 {
        if self.sweeps == 0 {
            0.0
        } else {
            self.total_ops as f64 / self.sweeps as f64
        }
    }

    /// Fills the exit fields shared by every solver.
    pub(crate) fn finish(
        method: &str,
        sys: &DiffusionSystem,
        st: &SolverState,
        trace: Vec<f64>,
        min_residual: f64,
        start: Instant,
    ) -> Self {
        let stop_ratio = sys.stop_ratio(&st.r);
        let parked_mass =
            st.r.iter().zip(&sys.theta).filter(|(_, t)| !t.is_finite()).fold(0.0, |acc, (r, _)| acc + r.abs());
        SolveReport {
            method: method.to_string(),
            problem: sys.problem.name().to_string(),
            eps: sys.eps,
            converged: stop_ratio < 1.0,
            sweeps: st.sweeps,
            total_ops: st.ops,
            gamma_log: st.gamma_log.clone(),
            vol_log: st.vol_log.clone(),
            residual_l1_trace: trace,
            min_residual,
            residual_support: st.r.iter().filter(|v| **v != 0.0).count(),
            stop_ratio,
            omega: None,
            monotone_guaranteed: false,
            diverged: false,
            timed_out: false,
            parked_mass,
            wall_seconds: start.elapsed().as_secs_f64(),
            bounds: None,
        }
    }
}

/// Read-only view handed to observers at every sweep boundary.
pub struct SweepView<'a> {
    pub sweep: usize,
    pub x: &'a [f64],
    pub r: &'a [f64],
    /// Coordinates that will be processed in the upcoming sweep, in order.
    pub frontier: &'a [usize],
}

/// Callback invoked at sweep boundaries, used by tests and diagnostics.
pub type Observer<'o> = &'o mut dyn FnMut(&SweepView);

/// FIFO of active coordinates with membership flags. A sentinel is pushed at
/// the start of each sweep, so coordinates activated during sweep `t` queue
/// up behind it and are processed in sweep `t + 1`.
#[derive(Debug, Clone)]
pub struct Frontier {
    fifo: VecDeque<usize>,
    in_queue: Vec<bool>,
}

const SENTINEL: usize = usize::MAX;

impl Frontier {
    pub fn new(dim: usize) -> Self {
        Self { fifo: VecDeque::new(), in_queue: vec![false; dim] }
    }

    /// Enqueues `c` unless it is already queued. Returns whether it was added.
    pub fn push(&mut self, c: usize) -> bool {
        if self.in_queue[c] {
            return false;
        }
        self.in_queue[c] = true;
        self.fifo.push_back(c);
        true
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.in_queue[c]
    }

    /// Closes the current sweep: everything queued so far forms `S_t`.
    /// Members keep their flag until [`Frontier::release`] is called, so
    /// they are not queued twice while waiting.
    pub fn take_sweep(&mut self) -> Vec<usize> {
        self.fifo.push_back(SENTINEL);
        let mut out = Vec::with_capacity(self.fifo.len() - 1);
        while let Some(c) = self.fifo.pop_front() {
            if c == SENTINEL {
                break;
            }
            out.push(c);
        }
        out
    }

    /// Marks `c` as no longer queued, allowing it to enter the next sweep.
    pub fn release(&mut self, c: usize) {
        self.in_queue[c] = false;
    }
}

/// `ω* = 2 / (1 + √(1 - (1-α)²))`, the SOR parameter suggested for PPR.
pub fn optimal_omega(alpha: f64) -> crate::Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(crate::Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let beta = 1.0 - alpha;
    Ok(2.0 / (1.0 + (1.0 - beta * beta).sqrt()))
}

pub(crate) fn check_omega(omega: f64) -> crate::Result<()> {
    if !(omega > 0.0 && omega <= 2.0) {
        return Err(crate::Error::InvalidParameter(format!("omega must be in (0, 2], got {omega}")));
    }
    Ok(())
}

/// Chebyshev step-size sequence `δ_1 = 1/σ`, `δ_{k+1} = 1/(2σ - δ_k)` with
/// `σ = (L+μ)/(L-μ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChebyshevSteps {
    pub sigma: f64,
    pub delta: f64,
}

impl ChebyshevSteps {
    pub fn new(mu: f64, l: f64) -> crate::Result<Self> {
        if !(mu > 0.0 && mu < l && l.is_finite()) {
            return Err(crate::Error::InvalidParameter(format!("need 0 < mu < L, got mu = {mu}, L = {l}")));
        }
        let sigma = (l + mu) / (l - mu);
        Ok(Self { sigma, delta: 1.0 / sigma })
    }

    /// Advances to the next δ and returns `(δ_t, δ_{t+1})`.
    pub fn advance(&mut self) -> (f64, f64) {
        let prev = self.delta;
        self.delta = 1.0 / (2.0 * self.sigma - prev);
        (prev, self.delta)
    }
}
