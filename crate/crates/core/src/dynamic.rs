//! Maintaining approximate PPR estimate/residual pairs while the graph
//! changes.
//!
//! Two bookkeeping conventions are supported. The classic pair keeps
//! `r = α e_s - (I - (1-α) A D^{-1}) p` and pushes `p_u += ω r_u`. The
//! β-generalized pair propagates an arbitrary signed source through
//! `P_vu = d_u^{β-1} d_v^{-β}` and pushes `p_u += α ω r_u`, so there
//! `r = source - (I - (1-α) P) p / α`.

use std::collections::HashMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{BackTransform, DiffusionSystem, OperatorQ, Problem, Propagation};
use crate::error::{Error, Result};
use crate::graph::{CsrGraph, EdgeEvent, EdgeEventKind, NodeId};
use crate::local::push_sweeps;
use crate::solver::{check_omega, Limits, SolveReport, SolverState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConvention {
    /// `p_u += ω r_u`, source `α e_s`, threshold `ε α d_u`.
    Classic,
    /// `p_u += α ω r_u`, arbitrary source, threshold `ε d_u^{1-β}`.
    Generalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprPair {
    /// Solver coordinates: `p` itself for the classic pair, `p / α` for the
    /// generalized one.
    x: Vec<f64>,
    pub r: Vec<f64>,
    /// Right-hand side in solver coordinates, ascending by node.
    source: Vec<(NodeId, f64)>,
    pub alpha: f64,
    pub eps: f64,
    pub omega: f64,
    pub beta_exp: f64,
    pub convention: PairConvention,
    /// Nodes whose residual changed since the last repair.
    pending: Vec<NodeId>,
}

impl PprPair {
    /// Classic pair for source `s` with `p = 0`, `r = α e_s`.
    pub fn classic(g: &CsrGraph, s: NodeId, alpha: f64, eps: f64, omega: f64) -> Result<Self> {
        if s >= g.n() {
            return Err(Error::NodeOutOfRange { node: s, n: g.n() });
        }
        Self::build(g, vec![(s, alpha)], alpha, eps, omega, 0.0, PairConvention::Classic)
    }

    /// Generalized pair for a dense signed source.
    pub fn generalized(g: &CsrGraph, source: &[f64], alpha: f64, beta_exp: f64, eps: f64, omega: f64) -> Result<Self> {
        if source.len() != g.n() {
            return Err(Error::LengthMismatch(source.len(), g.n()));
        }
        if source.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("source has non-finite entries".into()));
        }
        if !(0.0..=1.0).contains(&beta_exp) {
            return Err(Error::InvalidParameter(format!("beta must be in [0, 1], got {beta_exp}")));
        }
        let sparse = source.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        Self::build(g, sparse, alpha, eps, omega, beta_exp, PairConvention::Generalized)
    }

    fn build(
        g: &CsrGraph,
        source: Vec<(NodeId, f64)>,
        alpha: f64,
        eps: f64,
        omega: f64,
        beta_exp: f64,
        convention: PairConvention,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        check_omega(omega)?;
        let mut r = vec![0.0; g.n()];
        for &(c, v) in &source {
            r[c] = v;
        }
        let pending = source.iter().map(|&(c, _)| c).collect();
        Ok(Self { x: vec![0.0; g.n()], r, source, alpha, eps, omega, beta_exp, convention, pending })
    }

    /// The estimate `p`.
    pub fn estimate(&self) -> Vec<f64> {
        match self.convention {
            PairConvention::Classic => self.x.clone(),
            PairConvention::Generalized => self.x.iter().map(|v| self.alpha * v).collect(),
        }
    }

    /// Same pair with `p = 0` and `r = source`.
    pub fn reset(&self) -> Self {
        let mut fresh = self.clone();
        fresh.x.iter_mut().for_each(|v| *v = 0.0);
        fresh.r.iter_mut().for_each(|v| *v = 0.0);
        for &(c, v) in &self.source {
            fresh.r[c] = v;
        }
        fresh.pending = self.source.iter().map(|&(c, _)| c).collect();
        fresh
    }

    /// The linear system this pair solves on `g`.
    pub fn system<'g>(&self, g: &'g CsrGraph) -> DiffusionSystem<'g> {
        let (kind, factor, exp, problem, back) = match self.convention {
            PairConvention::Classic => (
                Propagation::RandomWalk,
                self.eps * self.alpha,
                1.0,
                Problem::Ppr { alpha: self.alpha },
                BackTransform::Identity,
            ),
            PairConvention::Generalized => (
                Propagation::Generalized { exponent: self.beta_exp },
                self.eps,
                1.0 - self.beta_exp,
                Problem::Generalized { alpha: self.alpha, exponent: self.beta_exp },
                BackTransform::Scale(self.alpha),
            ),
        };
        let theta = (0..g.n())
            .map(|u| match g.degree(u) {
                0 => f64::INFINITY,
                d => factor * (d as f64).powf(exp),
            })
            .collect();
        DiffusionSystem {
            op: OperatorQ::new(g, 1.0 - self.alpha, kind),
            b: self.source.clone(),
            theta,
            problem,
            symmetrized: false,
            back,
            eps: self.eps,
            source: match self.convention {
                PairConvention::Classic => self.source.first().map(|&(c, _)| c),
                PairConvention::Generalized => None,
            },
        }
    }

    /// Largest entry of `|r - (s - Q p)|` on `g`, in solver coordinates.
    pub fn consistency_error(&self, g: &CsrGraph) -> f64 {
        let sys = self.system(g);
        sys.residual(&self.x).iter().zip(&self.r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Applies `e` to `g` and adjusts the pair so that the consistency
    /// invariant holds on the edited graph. No push work is done.
    ///
    /// The classic pair follows the insert/delete adjustment once per
    /// endpoint: the pusher's estimate is rescaled by `d_new/d_old` so its
    /// contribution to old neighbors is unchanged, and only the two endpoint
    /// residuals move. A previously isolated pusher keeps its estimate.
    /// The generalized pair recomputes the residual on every node whose row
    /// of `P` changed.
    pub fn apply_event(&mut self, g: &mut CsrGraph, e: &EdgeEvent) -> Result<()> {
        match self.convention {
            PairConvention::Classic => {
                let before: [usize; 2] = [g.degree(e.u), g.degree(e.v)];
                g.apply_event_in_place(e)?;
                let beta = 1.0 - self.alpha;
                for (pusher, other, d_old) in [(e.u, e.v, before[0]), (e.v, e.u, before[1])] {
                    let p = self.x[pusher];
                    match e.kind {
                        EdgeEventKind::Insert => {
                            let d_new = d_old + 1;
                            let p_new = if d_old == 0 { p } else { p * d_new as f64 / d_old as f64 };
                            self.x[pusher] = p_new;
                            self.r[pusher] -= p_new - p;
                            self.r[other] += beta * p_new / d_new as f64;
                        }
                        EdgeEventKind::Delete => {
                            let d_new = d_old - 1;
                            let p_new = if d_new == 0 { p } else { p * d_new as f64 / d_old as f64 };
                            self.x[pusher] = p_new;
                            self.r[pusher] += p - p_new;
                            self.r[other] -= beta * p / d_old as f64;
                        }
                    }
                }
                self.pending.extend([e.u, e.v]);
            }
            PairConvention::Generalized => {
                let mut affected: Vec<NodeId> = vec![e.u, e.v];
                affected.extend_from_slice(g.neighbors(e.u));
                affected.extend_from_slice(g.neighbors(e.v));
                g.apply_event_in_place(e)?;
                affected.extend_from_slice(g.neighbors(e.u));
                affected.extend_from_slice(g.neighbors(e.v));
                affected.sort_unstable();
                affected.dedup();
                let sys = self.system(g);
                let mut b = vec![0.0; affected.len()];
                for (i, &w) in affected.iter().enumerate() {
                    if let Ok(j) = self.source.binary_search_by_key(&w, |&(c, _)| c) {
                        b[i] = self.source[j].1;
                    }
                }
                for (i, &w) in affected.iter().enumerate() {
                    self.r[w] = b[i] - self.x[w] + sys.op.row_dot(w, &self.x);
                }
                self.pending.extend(affected);
            }
        }
        Ok(())
    }

    /// Pushes signed residuals in FIFO order until `|r_u| < θ_u` everywhere.
    pub fn repair(&mut self, g: &CsrGraph, limits: Limits) -> SolveReport {
        let sys = self.system(g);
        let mut st = SolverState {
            x: std::mem::take(&mut self.x),
            r: std::mem::take(&mut self.r),
            sweeps: 0,
            ops: 0,
            gamma_log: Vec::new(),
            vol_log: Vec::new(),
        };
        let mut seeds = std::mem::take(&mut self.pending);
        seeds.sort_unstable();
        seeds.dedup();
        let mut rep = push_sweeps(&sys, &mut st, &seeds, self.omega, limits, None, "repair");
        rep.monotone_guaranteed = false;
        self.x = st.x;
        self.r = st.r;
        rep
    }
}

/// Pure form of [`PprPair::apply_event`].
pub fn event_adjust(g_before: &CsrGraph, pair: &PprPair, e: &EdgeEvent) -> Result<PprPair> {
    let mut g = g_before.clone();
    let mut out = pair.clone();
    out.apply_event(&mut g, e)?;
    Ok(out)
}

/// Pure form of [`PprPair::repair`].
pub fn repair(g: &CsrGraph, pair: &PprPair, limits: Limits) -> (PprPair, SolveReport) {
    let mut out = pair.clone();
    let rep = out.repair(g, limits);
    (out, rep)
}

/// Generalized push of one source column. Returns the converged pair, whose
/// [`PprPair::estimate`] is `p`.
pub fn beta_push(
    g: &CsrGraph,
    source: &[f64],
    alpha: f64,
    beta_exp: f64,
    eps: f64,
    omega: f64,
    limits: Limits,
) -> Result<(PprPair, SolveReport)> {
    let mut pair = PprPair::generalized(g, source, alpha, beta_exp, eps, omega)?;
    let mut rep = pair.repair(g, limits);
    rep.method = "beta-push".into();
    Ok((pair, rep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    /// Adjust the pair for every event of a batch, then repair once.
    Dynamic,
    /// Solve from `p = 0` on every snapshot.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub snapshot: usize,
    pub mode: SnapshotMode,
    pub events: usize,
    pub ops: u64,
    pub accumulated_ops: u64,
    pub sweeps: usize,
    pub converged: bool,
    /// `max |r - (s - Q p)|` on the snapshot graph, when checked.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consistency_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SnapshotOutcome {
    pub records: Vec<SnapshotRecord>,
    pub reports: Vec<SolveReport>,
    pub pair: PprPair,
    pub graph: CsrGraph,
}

/// Runs the initial solve on `g0` followed by one snapshot per batch.
/// `pair0` supplies the parameters; its state is reset first.
pub fn run_snapshots(
    g0: &CsrGraph,
    batches: &[Vec<EdgeEvent>],
    pair0: &PprPair,
    mode: SnapshotMode,
    limits: Limits,
    check_consistency: bool,
) -> Result<SnapshotOutcome> {
    let mut g = g0.clone();
    let mut pair = pair0.reset();
    let mut records = Vec::with_capacity(batches.len() + 1);
    let mut reports = Vec::with_capacity(batches.len() + 1);
    let mut accumulated = 0u64;
    for snapshot in 0..=batches.len() {
        let events = if snapshot == 0 { &[][..] } else { &batches[snapshot - 1][..] };
        match mode {
            SnapshotMode::Dynamic => {
                for e in events {
                    pair.apply_event(&mut g, e)?;
                }
            }
            SnapshotMode::Static => {
                g.apply_batch(events)?;
                pair = pair.reset();
            }
        }
        let rep = pair.repair(&g, limits);
        accumulated += rep.total_ops;
        records.push(SnapshotRecord {
            snapshot,
            mode,
            events: events.len(),
            ops: rep.total_ops,
            accumulated_ops: accumulated,
            sweeps: rep.sweeps,
            converged: rep.converged,
            consistency_error: check_consistency.then(|| pair.consistency_error(&g)),
        });
        reports.push(rep);
    }
    Ok(SnapshotOutcome { records, reports, pair, graph: g })
}

/// Parses an events file: `I u v` or `D u v` per line, `#` comments, and
/// `---` lines between batches. Node tokens are resolved through `labels`
/// when given, otherwise read as dense ids. Empty batches are dropped.
pub fn parse_events<R: BufRead>(reader: R, labels: Option<&HashMap<&str, NodeId>>) -> Result<Vec<Vec<EdgeEvent>>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t == "---" {
            if !current.is_empty() {
                batches.push(std::mem::take(&mut current));
            }
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(format!("expected `I u v` or `D u v`, got {t:?}")));
        }
        let kind = match toks[0] {
            "I" | "i" => EdgeEventKind::Insert,
            "D" | "d" => EdgeEventKind::Delete,
            other => return Err(err(format!("unknown event kind {other:?}"))),
        };
        let node = |tok: &str| -> Result<NodeId> {
            match labels {
                Some(map) => map.get(tok).copied().ok_or_else(|| err(format!("unknown node {tok:?}"))),
                None => tok.parse().map_err(|_| err(format!("bad node id {tok:?}"))),
            }
        };
        current.push(EdgeEvent { kind, u: node(toks[1])?, v: node(toks[2])? });
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// Writes batches in the format read by [`parse_events`].
pub fn format_events(batches: &[Vec<EdgeEvent>], labels: Option<&[String]>) -> String {
    let name = |u: NodeId| labels.map_or_else(|| u.to_string(), |l| l[u].clone());
    let mut out = String::new();
    for (i, batch) in batches.iter().enumerate() {
        if i > 0 {
            out.push_str("---\n");
        }
        for e in batch {
            let k = if e.kind == EdgeEventKind::Insert { 'I' } else { 'D' };
            out.push_str(&format!("{k} {} {}\n", name(e.u), name(e.v)));
        }
    }
    out
}

/// Random valid event batches on `g`: roughly half inserts of absent edges
/// and half deletes of present edges whose endpoints keep degree ≥ 1.
pub fn random_event_batches(g: &CsrGraph, batches: usize, per_batch: usize, seed: u64) -> Vec<Vec<EdgeEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = g.clone();
    let n = g.n();
    let mut out = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut batch = Vec::with_capacity(per_batch);
        let mut attempts = 0;
        while batch.len() < per_batch && attempts < 1000 * per_batch.max(1) {
            attempts += 1;
            let e = if rng.gen_bool(0.5) {
                let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if u == v || g.has_edge(u, v) {
                    continue;
                }
                EdgeEvent::insert(u, v)
            } else {
                let u = rng.gen_range(0..n);
                if g.degree(u) < 2 {
                    continue;
                }
                let v = g.neighbors(u)[rng.gen_range(0..g.degree(u))];
                if g.degree(v) < 2 {
                    continue;
                }
                EdgeEvent::delete(u, v)
            };
            g.apply_event_in_place(&e).expect("generated events are valid");
            batch.push(e);
        }
        out.push(batch);
    }
    out
}
