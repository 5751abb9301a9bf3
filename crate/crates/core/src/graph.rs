//! Undirected simple graphs in compressed sparse row form.
//!
//! Every undirected edge `{u, v}` is stored as the two arcs `u -> v` and
//! `v -> u`. Within a node's range the targets are sorted ascending, which
//! makes membership tests a binary search and keeps edits deterministic.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node index in `[0, n)`.
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeEventKind {
    Insert,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub kind: EdgeEventKind,
    pub u: NodeId,
    pub v: NodeId,
}

impl EdgeEvent {
    pub fn insert(u: NodeId, v: NodeId) -> Self {
        Self { kind: EdgeEventKind::Insert, u, v }
    }

    pub fn delete(u: NodeId, v: NodeId) -> Self {
        Self { kind: EdgeEventKind::Delete, u, v }
    }
}

/// A graph read from an edge list together with the original node tokens.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: CsrGraph,
    /// `labels[i]` is the token that was remapped to node `i`.
    pub labels: Vec<String>,
}

impl LoadedGraph {
    pub fn lookup(&self, label: &str) -> Option<NodeId> {
        // Linear scan is fine for CLI-sized lookups; `label_index` for bulk.
        self.labels.iter().position(|l| l == label)
    }

    pub fn label_index(&self) -> HashMap<&str, NodeId> {
        self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
    }
}

/// Batches larger than this fraction of `m` are applied by rebuilding.
pub const REBUILD_FRACTION: f64 = 0.1;

impl CsrGraph {
    /// Builds a graph on `n` nodes from undirected edges. Self-loops and
    /// duplicates (in either orientation) are dropped.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut arcs: Vec<(NodeId, NodeId)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::NodeOutOfRange { node: w, n });
                }
            }
            if u != v {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &arcs {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = arcs.into_iter().map(|(_, v)| v).collect();
        Ok(Self { offsets, targets })
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    #[inline]
    pub fn degree(&self, u: NodeId) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|u| self.degree(u)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    #[inline]
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n() && v < self.n() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Total degree over `nodes`; duplicates in `nodes` are counted twice.
    pub fn volume(&self, nodes: &[NodeId]) -> Result<usize> {
        let n = self.n();
        nodes.iter().try_fold(0usize, |acc, &u| {
            if u >= n {
                Err(Error::NodeOutOfRange { node: u, n })
            } else {
                Ok(acc + self.degree(u))
            }
        })
    }

    /// `vol(V) = 2m`.
    pub fn total_volume(&self) -> usize {
        self.targets.len()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u).iter().copied().filter(move |&v| u < v).map(move |v| (u, v))
        })
    }

    /// Checks symmetry, sortedness, absence of loops and duplicates.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.offsets[0] != 0 || self.offsets[n] != self.targets.len() {
            return Err(Error::Structural("offsets do not span targets".into()));
        }
        for u in 0..n {
            let nb = self.neighbors(u);
            for (i, &v) in nb.iter().enumerate() {
                if v >= n {
                    return Err(Error::NodeOutOfRange { node: v, n });
                }
                if v == u {
                    return Err(Error::Structural(format!("self-loop at {u}")));
                }
                if i > 0 && nb[i - 1] >= v {
                    return Err(Error::Structural(format!("targets of {u} not strictly sorted")));
                }
                if !self.has_edge(v, u) {
                    return Err(Error::Structural(format!("arc {u}->{v} has no reverse")));
                }
            }
        }
        Ok(())
    }

    fn check_event(&self, e: &EdgeEvent) -> Result<()> {
        let n = self.n();
        for w in [e.u, e.v] {
            if w >= n {
                return Err(Error::NodeOutOfRange { node: w, n });
            }
        }
        if e.u == e.v {
            return Err(Error::Structural(format!("self-loop event at {}", e.u)));
        }
        let present = self.has_edge(e.u, e.v);
        match e.kind {
            EdgeEventKind::Insert if present => {
                Err(Error::Structural(format!("edge ({}, {}) already present", e.u, e.v)))
            }
            EdgeEventKind::Delete if !present => {
                Err(Error::Structural(format!("edge ({}, {}) not present", e.u, e.v)))
            }
            _ => Ok(()),
        }
    }

    /// Applies one event, returning the edited graph.
    pub fn apply_event(&self, e: &EdgeEvent) -> Result<CsrGraph> {
        let mut g = self.clone();
        g.apply_event_in_place(e)?;
        Ok(g)
    }

    /// Sorted insertion/removal of the two arcs of `e`. The neighbor
    /// positions are found by binary search; the arc arrays are shifted in
    /// place.
    pub fn apply_event_in_place(&mut self, e: &EdgeEvent) -> Result<()> {
        self.check_event(e)?;
        match e.kind {
            EdgeEventKind::Insert => {
                self.insert_arc(e.u, e.v);
                self.insert_arc(e.v, e.u);
            }
            EdgeEventKind::Delete => {
                self.remove_arc(e.u, e.v);
                self.remove_arc(e.v, e.u);
            }
        }
        Ok(())
    }

    /// Applies a batch in order. Large batches are validated sequentially
    /// against an edge set and then rebuilt in one pass.
    pub fn apply_batch(&mut self, events: &[EdgeEvent]) -> Result<()> {
        if (events.len() as f64) <= REBUILD_FRACTION * self.m() as f64 {
            for e in events {
                self.apply_event_in_place(e)?;
            }
            return Ok(());
        }
        let n = self.n();
        let mut edges: std::collections::BTreeSet<(NodeId, NodeId)> = self.edges().collect();
        for e in events {
            for w in [e.u, e.v] {
                if w >= n {
                    return Err(Error::NodeOutOfRange { node: w, n });
                }
            }
            if e.u == e.v {
                return Err(Error::Structural(format!("self-loop event at {}", e.u)));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            let ok = match e.kind {
                EdgeEventKind::Insert => edges.insert(key),
                EdgeEventKind::Delete => edges.remove(&key),
            };
            if !ok {
                return Err(Error::Structural(format!("invalid {:?} of ({}, {})", e.kind, e.u, e.v)));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        *self = CsrGraph::from_edges(n, &edges)?;
        Ok(())
    }

    fn insert_arc(&mut self, u: NodeId, v: NodeId) {
        let pos = match self.neighbors(u).binary_search(&v) {
            Ok(_) => unreachable!("checked by check_event"),
            Err(p) => self.offsets[u] + p,
        };
        self.targets.insert(pos, v);
        for o in &mut self.offsets[u + 1..] {
            *o += 1;
        }
    }

    fn remove_arc(&mut self, u: NodeId, v: NodeId) {
        let pos = match self.neighbors(u).binary_search(&v) {
            Ok(p) => self.offsets[u] + p,
            Err(_) => unreachable!("checked by check_event"),
        };
        self.targets.remove(pos);
        for o in &mut self.offsets[u + 1..] {
            *o -= 1;
        }
    }

    /// Estimates `‖A‖₂ = λ_max(A)` by power iteration.
    ///
    /// The iterate `y ← A y / ‖A y‖` is started from a positive vector, and
    /// the estimate `‖A y‖ / ‖y‖` is the square root of the Rayleigh quotient
    /// of `A²`. For a nonnegative symmetric `A` this sequence is nondecreasing
    /// and converges to the Perron root even on bipartite graphs, where plain
    /// Rayleigh quotients of `A` oscillate. The result is capped at `d_max`.
    pub fn spectral_norm_estimate(&self, iters: usize, seed: u64) -> Result<f64> {
        if iters == 0 {
            return Err(Error::InvalidParameter("iters must be >= 1".into()));
        }
        let n = self.n();
        if n == 0 || self.m() == 0 {
            return Err(Error::EmptyGraph);
        }
        let d_max = self.max_degree() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y: Vec<f64> = (0..n).map(|_| 1.0 + rng.gen::<f64>()).collect();
        normalize(&mut y);
        let mut ay = vec![0.0; n];
        let mut estimate = 0.0f64;
        for _ in 0..iters {
            for u in 0..n {
                ay[u] = self.neighbors(u).iter().map(|&v| y[v]).sum();
            }
            let norm = ay.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let prev = estimate;
            estimate = norm;
            for (yi, ai) in y.iter_mut().zip(&ay) {
                *yi = ai / norm;
            }
            if (estimate - prev).abs() <= 1e-15 * estimate {
                break;
            }
        }
        Ok(estimate.min(d_max))
    }

    /// Writes the binary cache format: magic, version byte, then `n`, the arc
    /// count and both arrays as little-endian `u64`.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&[CACHE_VERSION])?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.targets.len() as u64).to_le_bytes())?;
        for &o in &self.offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &t in &self.targets {
            w.write_all(&(t as u64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::BadCache("wrong magic".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != CACHE_VERSION {
            return Err(Error::BadCache(format!("unsupported version {}", version[0])));
        }
        let mut read_u64 = || -> Result<u64> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let n = read_u64()? as usize;
        let arcs = read_u64()? as usize;
        let offsets = (0..=n).map(|_| read_u64().map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        let targets = (0..arcs).map(|_| read_u64().map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        let g = CsrGraph { offsets, targets };
        g.validate().map_err(|e| Error::BadCache(e.to_string()))?;
        Ok(g)
    }
}

const CACHE_MAGIC: &[u8; 6] = b"LDCSR\0";
const CACHE_VERSION: u8 = 1;

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
}

/// Reads a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped; tokens are remapped to dense ids in first-appearance
/// order.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<LoadedGraph> {
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (a, b) = match (toks.next(), toks.next(), toks.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected two node tokens, got {trimmed:?}"),
                })
            }
        };
        let mut id = |tok: &str| -> NodeId {
            if let Some(&x) = index.get(tok) {
                return x;
            }
            let x = labels.len();
            labels.push(tok.to_string());
            index.insert(tok.to_string(), x);
            x
        };
        let u = id(a);
        let v = id(b);
        edges.push((u, v));
    }
    let graph = CsrGraph::from_edges(labels.len(), &edges)?;
    if graph.m() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(LoadedGraph { graph, labels })
}

/// Small deterministic graphs used by tests, examples and benchmarks.
pub mod generators {
    use super::*;

    pub fn path(n: usize) -> CsrGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        CsrGraph::from_edges(n, &edges).expect("valid path")
    }

    pub fn cycle(n: usize) -> CsrGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        CsrGraph::from_edges(n, &edges).expect("valid cycle")
    }

    /// Star with center 0 and `n - 1` leaves.
    pub fn star(n: usize) -> CsrGraph {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        CsrGraph::from_edges(n, &edges).expect("valid star")
    }

    pub fn complete(n: usize) -> CsrGraph {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        CsrGraph::from_edges(n, &edges).expect("valid complete graph")
    }

    /// Erdős–Rényi `G(n, p)`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> CsrGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        CsrGraph::from_edges(n, &edges).expect("valid G(n,p)")
    }

    /// Chung–Lu graph with power-law expected degrees
    /// `w_i ∝ (i + i0)^{-1/(exponent-1)}`, scaled to the requested average
    /// degree. Edges are sampled by drawing `n * avg_degree / 2` endpoint
    /// pairs proportionally to weight, so the result is a multigraph sample
    /// with loops and duplicates removed.
    pub fn chung_lu(n: usize, avg_degree: f64, exponent: f64, seed: u64) -> CsrGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = 1.0 / (exponent - 1.0);
        let i0 = 10.0;
        let weights: Vec<f64> = (0..n).map(|i| (i as f64 + i0).powf(-gamma)).collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let draw = |rng: &mut ChaCha8Rng| -> NodeId {
            let x = rng.gen::<f64>() * acc;
            cumulative.partition_point(|&c| c < x).min(n - 1)
        };
        let target = (n as f64 * avg_degree / 2.0).round() as usize;
        let mut edges = Vec::with_capacity(target);
        for _ in 0..target {
            let u = draw(&mut rng);
            let v = draw(&mut rng);
            edges.push((u, v));
        }
        CsrGraph::from_edges(n, &edges).expect("valid Chung-Lu graph")
    }

    /// Renders an edge list in the text format accepted by
    /// [`load_edge_list`](super::load_edge_list).
    pub fn to_edge_list(g: &CsrGraph) -> String {
        let mut s = String::new();
        for (u, v) in g.edges() {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }
}
