//! Frontier-restricted solvers. Work is charged only for coordinates in the
//! active set `S_t`, and every sweep logs `vol(S_t)` and `γ_t`.

use std::time::Instant;

use rayon::prelude::*;

use crate::diffusion::{chebyshev_bounds, make_hk_system, DiffusionSystem};
use crate::error::Result;
use crate::global::{l1, require_symmetric};
use crate::graph::{CsrGraph, NodeId};
use crate::solver::{
    check_omega, ChebyshevSteps, Frontier, Limits, Observer, SolveReport, SolverState, SweepView,
};

/// Frontier members per parallel scatter chunk.
const CHUNK: usize = 256;

#[inline]
fn active(r: f64, theta: f64) -> bool {
    r.abs() >= theta
}


/// Sequential push sweeps over a sentinel-delimited FIFO, starting from an
/// existing state. `seeds` are the coordinates checked for activation before
/// the first sweep; every other coordinate must already be inactive.
pub(crate) fn push_sweeps(
    sys: &DiffusionSystem,
    st: &mut SolverState,
    seeds: &[usize],
    omega: f64,
    limits: Limits,
    mut observer: Option<Observer>,
    method: &str,
) -> SolveReport {
    let start = Instant::now();
    let theta = &sys.theta;
    let mut frontier = Frontier::new(sys.dim());
    for &c in seeds {
        if active(st.r[c], theta[c]) {
            frontier.push(c);
        }
    }
    let mut r_l1 = l1(&st.r);
    let mut trace = vec![r_l1];
    let mut min_residual = seeds.iter().map(|&c| st.r[c]).fold(f64::INFINITY, f64::min);
    let mut timed_out = false;
    while !frontier.is_empty() {
        if st.sweeps >= limits.max_sweeps {
            break;
        }
        if start.elapsed().as_secs_f64() > limits.max_seconds {
            timed_out = true;
            break;
        }
        let sweep = frontier.take_sweep();
        if let Some(obs) = observer.as_mut() {
            obs(&SweepView { sweep: st.sweeps, x: &st.x, r: &st.r, frontier: &sweep });
        }
        let l1_start = r_l1;
        let mut pushed = 0.0;
        let mut vol = 0u64;
        for &c in &sweep {
            frontier.release(c);
            let rho = st.r[c];
            if !active(rho, theta[c]) {
                continue;
            }
            pushed += rho.abs();
            vol += sys.op.cost(c) as u64;
            st.x[c] += omega * rho;
            let rest = (1.0 - omega) * rho;
            r_l1 += rest.abs() - rho.abs();
            st.r[c] = rest;
            min_residual = min_residual.min(rest);
            if active(rest, theta[c]) {
                frontier.push(c);
            }
            let r = &mut st.r;
            sys.op.for_each_target(c, |t, w| {
                let old = r[t];
                let new = old + omega * w * rho;
                r[t] = new;
                r_l1 += new.abs() - old.abs();
                min_residual = min_residual.min(new);
                if active(new, theta[t]) {
                    frontier.push(t);
                }
            });
        }
        if vol == 0 && pushed == 0.0 {
            continue;
        }
        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(if l1_start > 0.0 { pushed / l1_start } else { 0.0 });
        trace.push(r_l1);
    }
    if let Some(obs) = observer.as_mut() {
        obs(&SweepView { sweep: st.sweeps, x: &st.x, r: &st.r, frontier: &[] });
    }
    if min_residual == f64::INFINITY {
        min_residual = 0.0;
    }
    let mut rep = SolveReport::finish(method, sys, st, trace, min_residual, start);
    rep.timed_out = timed_out;
    rep.omega = Some(omega);
    rep.monotone_guaranteed = omega <= 1.0 && sys.monotone_regime();
    rep
}

fn seeds_of(sys: &DiffusionSystem) -> Vec<usize> {
    sys.b.iter().map(|&(c, _)| c).collect()
}

/// LocalGS: LocalSOR with `ω = 1`.
pub fn local_gs(sys: &DiffusionSystem, limits: Limits) -> (SolverState, SolveReport) {
    let (st, mut rep) = local_sor(sys, 1.0, limits).expect("omega = 1 is valid");
    rep.method = "local-gs".into();
    (st, rep)
}

/// LocalSOR: each coordinate of `S_t` is pushed with its residual at push
/// time, `x_u += ω r_u`, `r_u ← (1-ω) r_u`, `r_v += ω β P_vu r_u`.
pub fn local_sor(sys: &DiffusionSystem, omega: f64, limits: Limits) -> Result<(SolverState, SolveReport)> {
    local_sor_observed(sys, omega, limits, None)
}

pub fn local_sor_observed(
    sys: &DiffusionSystem,
    omega: f64,
    limits: Limits,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    check_omega(omega)?;
    let mut st = SolverState::initial(sys);
    let seeds = seeds_of(sys);
    let rep = push_sweeps(sys, &mut st, &seeds, omega, limits, observer, "local-sor");
    Ok((st, rep))
}

/// Heat-kernel push on the stage-expanded system. Returns `f̂` with the
/// report.
pub fn local_hk(g: &CsrGraph, tau: f64, s: NodeId, eps: f64, limits: Limits) -> Result<(Vec<f64>, SolveReport)> {
    let sys = make_hk_system(g, tau, s, eps)?;
    let (st, rep) = local_hk_system(&sys, limits);
    Ok((st.estimate(&sys), rep))
}

pub fn local_hk_system(sys: &DiffusionSystem, limits: Limits) -> (SolverState, SolveReport) {
    let mut st = SolverState::initial(sys);
    let seeds = seeds_of(sys);
    let rep = push_sweeps(sys, &mut st, &seeds, 1.0, limits, None, "local-hk");
    (st, rep)
}

enum JacobiRule {
    Gd,
    Chebyshev { mu: f64, l: f64, steps: ChebyshevSteps },
}

/// LocalGD: all of `S_t = {u : |r_u| ≥ θ_u}` is updated at once,
/// `x ← x + r_S`, `r ← r - Q r_S`.
///
/// With `parallel` the scatter is split into fixed chunks whose
/// contributions are added back in chunk order, which reproduces the
/// sequential floating-point sums exactly.
pub fn local_gd(sys: &DiffusionSystem, limits: Limits, parallel: bool) -> Result<(SolverState, SolveReport)> {
    local_gd_observed(sys, limits, parallel, None)
}

pub fn local_gd_observed(
    sys: &DiffusionSystem,
    limits: Limits,
    parallel: bool,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    require_symmetric(sys, "local-gd")?;
    Ok(jacobi_sweeps(sys, JacobiRule::Gd, limits, parallel, observer, "local-gd"))
}

/// Default sweep cap for LocalCH, `10 ⌈ln(1/ε) / μ⌉`.
pub fn local_ch_default_sweeps(eps: f64, mu: f64) -> usize {
    10 * ((1.0 / eps).ln() / mu).ceil().max(1.0) as usize
}

/// LocalCH: Chebyshev steps restricted to `S_t`, with momentum carried only
/// on coordinates that were also in `S_{t-1}`. Activation is two-sided,
/// `|r_u| ≥ θ_u`, since residuals may change sign. Runs whose `‖r‖₁` exceeds
/// ten times `‖b‖₁` stop with `diverged = true`.
///
/// `limits = None` applies [`local_ch_default_sweeps`].
pub fn local_ch(
    sys: &DiffusionSystem,
    bounds: Option<(f64, f64)>,
    limits: Option<Limits>,
    parallel: bool,
) -> Result<(SolverState, SolveReport)> {
    local_ch_observed(sys, bounds, limits, parallel, None)
}

pub fn local_ch_observed(
    sys: &DiffusionSystem,
    bounds: Option<(f64, f64)>,
    limits: Option<Limits>,
    parallel: bool,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    require_symmetric(sys, "local-ch")?;
    let (mu, l) = match bounds {
        Some(b) => b,
        None => chebyshev_bounds(sys)?,
    };
    let steps = ChebyshevSteps::new(mu, l)?;
    let limits = limits.unwrap_or(Limits { max_sweeps: local_ch_default_sweeps(sys.eps, mu), ..Limits::LOCAL });
    Ok(jacobi_sweeps(sys, JacobiRule::Chebyshev { mu, l, steps }, limits, parallel, observer, "local-ch"))
}

fn jacobi_sweeps(
    sys: &DiffusionSystem,
    mut rule: JacobiRule,
    limits: Limits,
    parallel: bool,
    mut observer: Option<Observer>,
    method: &str,
) -> (SolverState, SolveReport) {
    let start = Instant::now();
    let dim = sys.dim();
    let theta = &sys.theta;
    let mut st = SolverState::initial(sys);
    let mut r_l1 = l1(&st.r);
    let b_l1 = r_l1;
    let mut trace = vec![r_l1];
    let mut min_residual = st.r.iter().copied().fold(0.0, f64::min);
    let mut frontier: Vec<usize> = sys.b.iter().map(|&(c, _)| c).filter(|&c| active(st.r[c], theta[c])).collect();
    frontier.sort_unstable();
    // Momentum of the previous sweep, nonzero only on S_{t-1}.
    let mut prev_delta = vec![0.0; dim];
    let mut prev_support: Vec<usize> = Vec::new();
    let mut mark = vec![false; dim];
    let mut timed_out = false;
    let mut diverged = false;
    let mut deltas: Vec<f64> = Vec::new();
    while !frontier.is_empty() {
        if st.sweeps >= limits.max_sweeps {
            break;
        }
        if start.elapsed().as_secs_f64() > limits.max_seconds {
            timed_out = true;
            break;
        }
        if let Some(obs) = observer.as_mut() {
            obs(&SweepView { sweep: st.sweeps, x: &st.x, r: &st.r, frontier: &frontier });
        }
        let l1_start = r_l1;
        let pushed: f64 = frontier.iter().map(|&c| st.r[c].abs()).sum();
        let vol: u64 = frontier.iter().map(|&c| sys.op.cost(c) as u64).sum();

        deltas.clear();
        match &mut rule {
            JacobiRule::Gd => deltas.extend(frontier.iter().map(|&c| st.r[c])),
            JacobiRule::Chebyshev { mu, l, steps } => {
                if st.sweeps == 0 {
                    let step = 2.0 / (*l + *mu);
                    deltas.extend(frontier.iter().map(|&c| step * st.r[c]));
                } else {
                    let (d_t, d_next) = steps.advance();
                    let step = 4.0 * d_next / (*l - *mu);
                    let momentum = d_t * d_next;
                    deltas.extend(frontier.iter().map(|&c| step * st.r[c] + momentum * prev_delta[c]));
                }
                for &c in &prev_support {
                    prev_delta[c] = 0.0;
                }
                for (&c, &d) in frontier.iter().zip(&deltas) {
                    prev_delta[c] = d;
                }
                prev_support.clone_from(&frontier);
            }
        }

        for (&c, &d) in frontier.iter().zip(&deltas) {
            st.x[c] += d;
            let old = st.r[c];
            let new = old - d;
            st.r[c] = new;
            r_l1 += new.abs() - old.abs();
            min_residual = min_residual.min(new);
            mark[c] = true;
        }
        let mut candidates = frontier.clone();
        let mut apply = |t: usize, v: f64, r: &mut [f64]| {
            let old = r[t];
            let new = old + v;
            r[t] = new;
            r_l1 += new.abs() - old.abs();
            min_residual = min_residual.min(new);
            if !mark[t] {
                mark[t] = true;
                candidates.push(t);
            }
        };
        if parallel {
            let op = &sys.op;
            let chunks: Vec<Vec<(usize, f64)>> = frontier
                .par_chunks(CHUNK)
                .zip(deltas.par_chunks(CHUNK))
                .map(|(cs, ds)| {
                    let mut out = Vec::new();
                    for (&c, &d) in cs.iter().zip(ds) {
                        op.for_each_target(c, |t, w| out.push((t, w * d)));
                    }
                    out
                })
                .collect();
            for chunk in chunks {
                for (t, v) in chunk {
                    apply(t, v, &mut st.r);
                }
            }
        } else {
            for (&c, &d) in frontier.iter().zip(&deltas) {
                let r = &mut st.r;
                sys.op.for_each_target(c, |t, w| apply(t, w * d, r));
            }
        }

        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(if l1_start > 0.0 { pushed / l1_start } else { 0.0 });
        trace.push(r_l1);

        for &c in &candidates {
            mark[c] = false;
        }
        candidates.retain(|&c| active(st.r[c], theta[c]));
        candidates.sort_unstable();
        frontier = candidates;

        if matches!(rule, JacobiRule::Chebyshev { .. }) && r_l1 > 10.0 * b_l1 {
            diverged = true;
            break;
        }
    }
    if let Some(obs) = observer.as_mut() {
        obs(&SweepView { sweep: st.sweeps, x: &st.x, r: &st.r, frontier: &frontier });
    }
    let mut rep = SolveReport::finish(method, sys, &st, trace, min_residual, start);
    rep.timed_out = timed_out;
    rep.diverged = diverged;
    rep.converged &= !diverged;
    rep.monotone_guaranteed = matches!(rule, JacobiRule::Gd) && sys.monotone_regime();
    (st, rep)
}
