//! Full-graph baselines. Every sweep touches all coordinates and is charged
//! `vol(V)` operations.

use std::time::Instant;

use crate::diffusion::{chebyshev_bounds, DiffusionSystem, Problem, Propagation};
use crate::error::{Error, Result};
use crate::solver::{check_omega, ChebyshevSteps, Limits, Observer, SolveReport, SolverState, SweepView};

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

fn min_entry(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Cost of one full sweep, `vol(V)` per stage block.
fn full_volume(sys: &DiffusionSystem) -> u64 {
    let stages = sys.dim() / sys.graph().n();
    (sys.graph().total_volume() * stages) as u64
}

pub(crate) fn require_symmetric(sys: &DiffusionSystem, method: &str) -> Result<()> {
    match sys.problem {
        Problem::Ppr { .. } if sys.symmetrized => Ok(()),
        Problem::Katz { .. } => Ok(()),
        _ => Err(Error::Unsupported(format!(
            "{method} needs the symmetrized PPR system or a Katz system, got {}{}",
            sys.problem.name(),
            if sys.symmetrized { "" } else { " (unsymmetrized)" }
        ))),
    }
}

struct Run<'a, 'o> {
    start: Instant,
    limits: Limits,
    observer: Option<Observer<'o>>,
    all: &'a [usize],
    trace: Vec<f64>,
    min_residual: f64,
    timed_out: bool,
}

impl<'a, 'o> Run<'a, 'o> {
    fn new(limits: Limits, observer: Option<Observer<'o>>, all: &'a [usize], st: &SolverState) -> Self {
        Self {
            start: Instant::now(),
            limits,
            observer,
            all,
            trace: vec![l1(&st.r)],
            min_residual: min_entry(&st.r),
            timed_out: false,
        }
    }

    /// Whether another sweep should run.
    fn proceed(&mut self, sys: &DiffusionSystem, st: &SolverState) -> bool {
        if let Some(obs) = self.observer.as_mut() {
            obs(&SweepView { sweep: st.sweeps, x: &st.x, r: &st.r, frontier: self.all });
        }
        if sys.stop_ratio(&st.r) < 1.0 || st.sweeps >= self.limits.max_sweeps {
            return false;
        }
        if self.start.elapsed().as_secs_f64() > self.limits.max_seconds {
            self.timed_out = true;
            return false;
        }
        true
    }

    fn finish(self, method: &str, sys: &DiffusionSystem, st: &SolverState) -> SolveReport {
        let mut rep = SolveReport::finish(method, sys, st, self.trace, self.min_residual, self.start);
        rep.timed_out = self.timed_out;
        rep
    }
}

pub fn gauss_seidel(sys: &DiffusionSystem, limits: Limits) -> (SolverState, SolveReport) {
    let (st, mut rep) = sor_observed(sys, 1.0, limits, None).expect("omega = 1 is valid");
    rep.method = "gs".into();
    (st, rep)
}

/// Successive overrelaxation, sweeping coordinates in ascending order.
pub fn sor(sys: &DiffusionSystem, omega: f64, limits: Limits) -> Result<(SolverState, SolveReport)> {
    sor_observed(sys, omega, limits, None)
}

pub fn sor_observed(
    sys: &DiffusionSystem,
    omega: f64,
    limits: Limits,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    check_omega(omega)?;
    let mut st = SolverState::initial(sys);
    let all: Vec<usize> = (0..sys.dim()).collect();
    let vol = full_volume(sys);
    let mut run = Run::new(limits, observer, &all, &st);
    while run.proceed(sys, &st) {
        let r_l1 = l1(&st.r);
        let mut pushed = 0.0;
        for c in 0..sys.dim() {
            let rho = st.r[c];
            if rho == 0.0 {
                continue;
            }
            pushed += rho.abs();
            st.x[c] += omega * rho;
            st.r[c] = (1.0 - omega) * rho;
            let r = &mut st.r;
            let mut low = run.min_residual.min(r[c]);
            sys.op.for_each_target(c, |t, w| {
                r[t] += omega * w * rho;
                low = low.min(r[t]);
            });
            run.min_residual = low;
        }
        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(if r_l1 > 0.0 { pushed / r_l1 } else { 0.0 });
        run.trace.push(l1(&st.r));
    }
    let mut rep = run.finish("sor", sys, &st);
    rep.omega = Some(omega);
    rep.monotone_guaranteed = omega <= 1.0 && sys.monotone_regime();
    Ok((st, rep))
}

/// Unit-step gradient descent `x ← x + r`, `r ← r - Q r`.
pub fn gradient_descent(sys: &DiffusionSystem, limits: Limits, parallel: bool) -> Result<(SolverState, SolveReport)> {
    gradient_descent_observed(sys, limits, parallel, None)
}

pub fn gradient_descent_observed(
    sys: &DiffusionSystem,
    limits: Limits,
    parallel: bool,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    require_symmetric(sys, "gd")?;
    let mut st = SolverState::initial(sys);
    let all: Vec<usize> = (0..sys.dim()).collect();
    let vol = full_volume(sys);
    let mut qr = vec![0.0; sys.dim()];
    let mut run = Run::new(limits, observer, &all, &st);
    while run.proceed(sys, &st) {
        sys.op.apply_into(&st.r, &mut qr, parallel);
        for c in 0..sys.dim() {
            st.x[c] += st.r[c];
            st.r[c] -= qr[c];
        }
        run.min_residual = run.min_residual.min(min_entry(&st.r));
        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(1.0);
        run.trace.push(l1(&st.r));
    }
    let mut rep = run.finish("gd", sys, &st);
    rep.monotone_guaranteed = sys.monotone_regime();
    Ok((st, rep))
}

/// Chebyshev iteration with eigenvalue bounds `[μ, L]` of `Q`. Runs whose
/// residual grows past ten times `‖b‖₁` are stopped and flagged.
pub fn chebyshev(
    sys: &DiffusionSystem,
    bounds: Option<(f64, f64)>,
    limits: Limits,
    parallel: bool,
) -> Result<(SolverState, SolveReport)> {
    chebyshev_observed(sys, bounds, limits, parallel, None)
}

pub fn chebyshev_observed(
    sys: &DiffusionSystem,
    bounds: Option<(f64, f64)>,
    limits: Limits,
    parallel: bool,
    observer: Option<Observer>,
) -> Result<(SolverState, SolveReport)> {
    require_symmetric(sys, "ch")?;
    let (mu, l) = match bounds {
        Some(b) => b,
        None => chebyshev_bounds(sys)?,
    };
    let mut steps = ChebyshevSteps::new(mu, l)?;
    let mut st = SolverState::initial(sys);
    let all: Vec<usize> = (0..sys.dim()).collect();
    let vol = full_volume(sys);
    let dim = sys.dim();
    let mut delta = vec![0.0; dim];
    let mut q_delta = vec![0.0; dim];
    let b_l1 = sys.b_l1();
    let mut diverged = false;
    let mut run = Run::new(limits, observer, &all, &st);
    while run.proceed(sys, &st) {
        if st.sweeps == 0 {
            let step = 2.0 / (l + mu);
            delta.iter_mut().zip(&st.r).for_each(|(d, r)| *d = step * r);
        } else {
            let (d_t, d_next) = steps.advance();
            let step = 4.0 * d_next / (l - mu);
            let momentum = d_t * d_next;
            delta.iter_mut().zip(&st.r).for_each(|(d, r)| *d = step * r + momentum * *d);
        }
        sys.op.apply_into(&delta, &mut q_delta, parallel);
        for c in 0..dim {
            st.x[c] += delta[c];
            st.r[c] -= q_delta[c];
        }
        run.min_residual = run.min_residual.min(min_entry(&st.r));
        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(1.0);
        let r_l1 = l1(&st.r);
        run.trace.push(r_l1);
        if r_l1 > 10.0 * b_l1 {
            diverged = true;
            break;
        }
    }
    let mut rep = run.finish("ch", sys, &st);
    rep.diverged = diverged;
    rep.converged &= !diverged;
    Ok((st, rep))
}

/// Stage-by-stage Taylor propagation `v_{k+1} = A D^{-1} v_k / (k+1)` for a
/// heat-kernel system. One sweep per stage.
pub fn hk_taylor_global(sys: &DiffusionSystem, limits: Limits) -> Result<(SolverState, SolveReport)> {
    let Propagation::HeatKernel { stages } = sys.op.kind else {
        return Err(Error::Unsupported(format!("hk_taylor_global on a {} system", sys.problem.name())));
    };
    let start = Instant::now();
    let g = sys.graph();
    let n = g.n();
    let mut st = SolverState::initial(sys);
    let trace0 = l1(&st.r);
    st.x[..n].copy_from_slice(&st.r[..n]);
    let vol = g.total_volume() as u64;
    for k in 0..stages.min(limits.max_sweeps) {
        let (cur, next) = st.x.split_at_mut((k + 1) * n);
        let cur = &cur[k * n..];
        for (v, out) in next[..n].iter_mut().enumerate() {
            let s: f64 = g.neighbors(v).iter().map(|&u| cur[u] / g.degree(u) as f64).sum();
            *out = s / (k + 1) as f64 + st.r[(k + 1) * n + v];
        }
        st.sweeps += 1;
        st.ops += vol;
        st.vol_log.push(vol);
        st.gamma_log.push(1.0);
    }
    if st.sweeps < stages {
        // Stopped early: stages after the last computed one keep their
        // residual mass.
        st.r = sys.residual(&st.x);
    } else {
        st.r.iter_mut().for_each(|v| *v = 0.0);
    }
    let trace = vec![trace0, l1(&st.r)];
    let mut rep = SolveReport::finish("hk-taylor", sys, &st, trace, 0.0, start);
    rep.converged = st.sweeps == stages;
    Ok((st, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::*;
    use crate::graph::generators::*;
    use crate::graph::CsrGraph;
    use nalgebra::DMatrix;

    fn dscaled_gap(g: &CsrGraph, a: &[f64], b: &[f64]) -> f64 {
        (0..g.n()).filter(|&u| g.degree(u) > 0).map(|u| (a[u] - b[u]).abs() / g.degree(u) as f64).fold(0.0, f64::max)
    }

    #[test]
    fn gs_p2_ppr() {
        let g = path(2);
        let sys = make_ppr_system(&g, 0.5, 0, 1e-8, false).unwrap();
        let (st, rep) = gauss_seidel(&sys, Limits::GLOBAL);
        assert!(rep.converged);
        assert_eq!(rep.total_ops, rep.sweeps as u64 * 2);
        let f = st.estimate(&sys);
        assert!(dscaled_gap(&g, &f, &[2.0 / 3.0, 1.0 / 3.0]) <= 1e-8);
    }

    #[test]
    fn zero_source_converges_immediately() {
        let g = path(3);
        let sys = make_generalized_system(&g, 0.5, 0.0, &[0.0; 3], 1e-6).unwrap();
        let (st, rep) = sor(&sys, 1.0, Limits::GLOBAL).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.sweeps, 0);
        assert_eq!(st.x, vec![0.0; 3]);
    }

    #[test]
    fn gs_k3_katz() {
        let g = complete(3);
        let sys = make_katz_system(&g, 0.25, 0, 1e-9).unwrap();
        let (st, rep) = gauss_seidel(&sys, Limits::GLOBAL);
        assert!(rep.converged);
        assert!(dscaled_gap(&g, &st.estimate(&sys), &dense_solve(&sys).unwrap()) <= 1e-8);
    }

    #[test]
    fn sor_omega_one_is_gs() {
        let g = erdos_renyi(60, 0.1, 2);
        let s = (0..60).find(|&u| g.degree(u) > 0).unwrap();
        let sys = make_ppr_system(&g, 0.15, s, 1e-6, false).unwrap();
        let (a, _) = gauss_seidel(&sys, Limits::GLOBAL);
        let (b, _) = sor(&sys, 1.0, Limits::GLOBAL).unwrap();
        assert_eq!(a, b);
        assert!(sor(&sys, 2.5, Limits::GLOBAL).is_err());
    }

    #[test]
    fn sor_with_omega_star_is_not_slower_on_p2() {
        let g = path(2);
        let sys = make_ppr_system(&g, 0.5, 0, 1e-10, false).unwrap();
        let w = crate::solver::optimal_omega(0.5).unwrap();
        let (_, fast) = sor(&sys, w, Limits::GLOBAL).unwrap();
        let (_, base) = sor(&sys, 1.0, Limits::GLOBAL).unwrap();
        assert!(fast.converged && fast.sweeps <= base.sweeps);
    }

    #[test]
    fn gd_first_sweep_and_recurrence() {
        let g = complete(3);
        let sys = make_katz_system(&g, 0.25, 0, 1e-12).unwrap();
        let (st1, _) = gradient_descent(&sys, Limits::GLOBAL.with_max_sweeps(1), false).unwrap();
        assert_eq!(st1.x, sys.b_dense());
        // r^(t) = (I - Q)^t b = (αA)^t e_0.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]) * 0.25;
        let b = nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0]);
        for t in 1..=5 {
            let (st, _) = gradient_descent(&sys, Limits::GLOBAL.with_max_sweeps(t), false).unwrap();
            let expect = a.pow(t as u32) * &b;
            for u in 0..3 {
                assert!((st.r[u] - expect[u]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn gd_needs_symmetric_system() {
        let g = path(2);
        let sys = make_ppr_system(&g, 0.5, 0, 0.01, false).unwrap();
        assert!(matches!(gradient_descent(&sys, Limits::GLOBAL, false), Err(Error::Unsupported(_))));
        let sym = make_ppr_system(&g, 0.5, 0, 0.01, true).unwrap();
        let (st, rep) = gradient_descent(&sym, Limits::GLOBAL, false).unwrap();
        assert!(rep.converged);
        assert!(dscaled_gap(&g, &st.estimate(&sym), &[2.0 / 3.0, 1.0 / 3.0]) <= 0.01);
    }

    #[test]
    fn chebyshev_p2_and_first_step() {
        let g = path(2);
        let sym = make_ppr_system(&g, 0.5, 0, 1e-10, true).unwrap();
        let (st1, _) = chebyshev(&sym, None, Limits::GLOBAL.with_max_sweeps(1), false).unwrap();
        assert!((st1.x[0] - 2.0 / 2.0 * 0.5).abs() < 1e-15);
        let (st, rep) = chebyshev(&sym, None, Limits::GLOBAL, false).unwrap();
        let (_, gd) = gradient_descent(&sym, Limits::GLOBAL, false).unwrap();
        assert!(rep.converged && rep.sweeps <= gd.sweeps);
        assert!(dscaled_gap(&g, &st.estimate(&sym), &[2.0 / 3.0, 1.0 / 3.0]) <= 1e-10);
        assert!(chebyshev(&sym, Some((1.0, 0.5)), Limits::GLOBAL, false).is_err());
    }

    #[test]
    fn chebyshev_rate_beats_gd() {
        let g = erdos_renyi(150, 0.05, 7);
        let s = (0..150).max_by_key(|&u| g.degree(u)).unwrap();
        let sym = make_ppr_system(&g, 0.05, s, 1e-14, true).unwrap();
        let lim = Limits::GLOBAL.with_max_sweeps(30);
        let l2 = |st: &SolverState| st.r.iter().map(|v| v * v).sum::<f64>().sqrt().ln();
        let slope = |f: &dyn Fn(usize) -> f64| {
            let ts: Vec<f64> = (5..=30).map(|t| t as f64).collect();
            let ys: Vec<f64> = (5..=30).map(f).collect();
            let (mt, my) = (ts.iter().sum::<f64>() / 26.0, ys.iter().sum::<f64>() / 26.0);
            ts.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum::<f64>()
                / ts.iter().map(|t| (t - mt) * (t - mt)).sum::<f64>()
        };
        let ch = |t: usize| l2(&chebyshev(&sym, None, lim.with_max_sweeps(t), false).unwrap().0);
        let gd = |t: usize| l2(&gradient_descent(&sym, lim.with_max_sweeps(t), false).unwrap().0);
        assert!(slope(&ch) < slope(&gd));
    }

    #[test]
    fn parallel_gd_matches_sequential() {
        let g = erdos_renyi(300, 0.03, 5);
        let sys = make_ppr_system(&g, 0.1, 0, 1e-6, true).unwrap();
        let (a, _) = gradient_descent(&sys, Limits::GLOBAL, false).unwrap();
        let (b, _) = gradient_descent(&sys, Limits::GLOBAL, true).unwrap();
        assert_eq!(a.x, b.x);
        let (a, _) = chebyshev(&sys, None, Limits::GLOBAL, false).unwrap();
        let (b, _) = chebyshev(&sys, None, Limits::GLOBAL, true).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn hk_taylor() {
        let k3 = complete(3);
        let sys = make_hk_system(&k3, 1.0, 0, 1e-6).unwrap();
        let Problem::HeatKernel { stages, .. } = sys.problem else { unreachable!() };
        let (st, rep) = hk_taylor_global(&sys, Limits::GLOBAL).unwrap();
        assert_eq!(rep.sweeps, stages);
        assert_eq!(rep.total_ops, (stages * 6) as u64);
        let f = st.estimate(&sys);
        let oracle = series_oracle(&sys, 60);
        let gap: f64 = f.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum();
        let fact: f64 = (1..=stages).map(|k| k as f64).product();
        assert!(gap <= 1.0 / (fact * stages as f64));
        let p2 = path(2);
        let tiny = make_hk_system(&p2, 1e-12, 0, 1e-6).unwrap();
        let (st, rep) = hk_taylor_global(&tiny, Limits::GLOBAL).unwrap();
        assert_eq!(rep.sweeps, 0);
        assert!((st.estimate(&tiny)[0] - 1.0).abs() < 1e-11);
        let ppr = make_ppr_system(&p2, 0.5, 0, 1e-3, false).unwrap();
        assert!(hk_taylor_global(&ppr, Limits::GLOBAL).is_err());
    }
}
