//! Batched search over an [`IvfRabitqIndex`].
//!
//! Queries are rotated once, matched against centroids to pick `n_probe`
//! clusters each, and the resulting (query, cluster) pairs are sorted by
//! cluster. Each pair is scanned independently: 1-bit estimates for every
//! member, pruning against the query's current K-th best distance, refinement
//! of survivors with the ex-codes, and a local top-K. Local lists are merged
//! per query at the end.
//!
//! Pairs run in fixed-size waves. Every pair in a wave sees the thresholds as
//! they were when the wave started, and thresholds are lowered after the wave
//! in pair order. Results therefore do not depend on the number of threads.

mod estimate;
mod ip;

use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};

use rayon::prelude::*;

use crate::clustering::Centroids;
use crate::error::{check_dims, Error, Result};
use crate::index::IvfRabitqIndex;
use crate::linalg::{cmp_dist_id, dot, squared_norm, Neighbors, VectorMatrix};

pub use estimate::{cluster_local_search, estimate_stage1, refine_stage2};
pub use ip::{build_luts, ip_bitwise, ip_lut, LookupTables, QuantizedQuery, LUT_BLOCK};

/// Number of (query, cluster) pairs scanned between threshold updates.
pub const PAIRS_PER_WAVE: usize = 256;

/// Inner-product backend for the 1-bit stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IpMode {
    #[default]
    Lut,
    Bitwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub k: usize,
    pub n_probe: usize,
    pub ip_mode: IpMode,
    /// Bits per dimension of the quantized query in bitwise mode.
    pub query_bits: u8,
    /// Re-estimate survivors with the ex-codes. Ignored for 1-bit indexes.
    pub refine: bool,
    /// Prune against the running K-th best distance. When off the threshold
    /// stays at infinity.
    pub prune: bool,
}

impl SearchParams {
    pub fn new(k: usize, n_probe: usize) -> Self {
        Self {
            k,
            n_probe,
            ip_mode: IpMode::Lut,
            query_bits: 4,
            refine: true,
            prune: true,
        }
    }

    pub fn with_mode(mut self, ip_mode: IpMode) -> Self {
        self.ip_mode = ip_mode;
        self
    }

    pub fn validate(&self, n_clusters: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.n_probe == 0 || self.n_probe > n_clusters {
            return Err(Error::invalid(format!(
                "n_probe must be in 1..={n_clusters}, got {}",
                self.n_probe
            )));
        }
        if !(2..=8).contains(&self.query_bits) {
            return Err(Error::invalid(format!(
                "query bits must be in 2..=8, got {}",
                self.query_bits
            )));
        }
        Ok(())
    }
}

/// Estimated neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub pid: u64,
    pub dist2: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryRepr {
    Lut(LookupTables),
    Bitwise(QuantizedQuery),
}

/// Everything about one query that is reused across its probes.
#[derive(Debug)]
pub struct QueryState {
    pub q_rot: Vec<f32>,
    pub sum_q: f64,
    pub repr: QueryRepr,
    /// Widening of the 1-bit lower bound, in units of the per-vector scale
    /// factor, covering the query quantization error in bitwise mode:
    /// `c_eps * 0.5 * ||q_rot - delta * q_hat||`. Zero in LUT mode.
    pub ip_slack: f64,
    threshold: AtomicU32,
}

impl QueryState {
    /// State for an already rotated query; `c_eps` is the index's error-bound
    /// multiplier.
    pub fn from_rotated(q_rot: Vec<f32>, sp: &SearchParams, c_eps: f32) -> Self {
        let sum_q = q_rot.iter().map(|&v| v as f64).sum();
        let (repr, ip_slack) = match sp.ip_mode {
            IpMode::Lut => (QueryRepr::Lut(build_luts(&q_rot)), 0.0),
            IpMode::Bitwise => {
                let qq = QuantizedQuery::new(&q_rot, sp.query_bits);
                let slack = c_eps as f64 * 0.5 * qq.residual_norm(&q_rot);
                (QueryRepr::Bitwise(qq), slack)
            }
        };
        Self {
            q_rot,
            sum_q,
            repr,
            ip_slack,
            threshold: AtomicU32::new(f32::INFINITY.to_bits()),
        }
    }

    /// Current K-th best distance seen so far (`+inf` until K are known).
    pub fn threshold(&self) -> f32 {
        f32::from_bits(self.threshold.load(AtomicOrdering::Acquire))
    }

    /// Lowers the threshold to `value` if it is smaller. Non-negative floats
    /// order like their bit patterns, so an integer minimum suffices.
    pub fn lower_threshold(&self, value: f32) {
        debug_assert!(value >= 0.0);
        self.threshold.fetch_min(value.to_bits(), AtomicOrdering::AcqRel);
    }
}

/// Rotates `q` with the index rotation and builds its query state.
pub fn prepare_query(q: &[f32], idx: &IvfRabitqIndex, sp: &SearchParams) -> Result<QueryState> {
    let q_rot = idx.rotation().apply_vec(q)?;
    Ok(QueryState::from_rotated(q_rot, sp, idx.c_eps()))
}

/// One probe of a query: a cluster and the query's squared distance to its
/// centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub cluster: u32,
    pub dist2: f64,
}

/// The `n_probe` nearest centroids of each row of `q_rot`, ascending,
/// ties to the smaller cluster id. Distances use
/// `||q||^2 + ||c||^2 - 2 <q, c>`.
pub fn select_clusters(q_rot: &VectorMatrix, centroids: &Centroids, n_probe: usize) -> Result<Vec<Vec<Probe>>> {
    check_dims(centroids.dims(), q_rot.dims())?;
    if n_probe == 0 || n_probe > centroids.len() {
        return Err(Error::invalid(format!(
            "n_probe must be in 1..={}, got {n_probe}",
            centroids.len()
        )));
    }
    let norms = centroids.squared_norms();
    Ok(q_rot
        .as_slice()
        .par_chunks_exact(q_rot.dims())
        .map(|q| {
            let s_q = squared_norm(q);
            let mut d: Vec<(f64, u64)> = (0..centroids.len())
                .map(|j| {
                    let d2 = s_q + norms[j] - 2.0 * dot(q, centroids.centroid(j));
                    (d2.max(0.0), j as u64)
                })
                .collect();
            if n_probe < d.len() {
                d.select_nth_unstable_by(n_probe - 1, |a, b| cmp_dist_id(*a, *b));
                d.truncate(n_probe);
            }
            d.sort_unstable_by(|a, b| cmp_dist_id(*a, *b));
            d.into_iter()
                .map(|(dist2, j)| Probe {
                    cluster: j as u32,
                    dist2,
                })
                .collect()
        })
        .collect())
}

/// A (query, cluster) pair to scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePair {
    pub query: u32,
    pub cluster: u32,
    pub dist2: f64,
}

/// Stable sort by (cluster, query).
pub fn schedule_probes(mut pairs: Vec<ProbePair>) -> Vec<ProbePair> {
    pairs.sort_by_key(|p| (p.cluster, p.query));
    pairs
}

#[derive(PartialEq)]
struct Head(Candidate, usize, usize);

impl Eq for Head {}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Head {
    // Reversed so the max-heap yields the smallest candidate.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        estimate::cmp_candidates(&other.0, &self.0)
    }
}

/// K-way merge of sorted candidate lists into the `k` smallest overall.
pub fn merge_topk(lists: &[Vec<Candidate>], k: usize) -> Vec<Candidate> {
    let mut heap: BinaryHeap<Head> = lists
        .iter()
        .enumerate()
        .filter_map(|(l, list)| list.first().map(|&c| Head(c, l, 0)))
        .collect();
    let mut out = Vec::with_capacity(k.min(lists.iter().map(Vec::len).sum()));
    while out.len() < k {
        let Some(Head(c, l, i)) = heap.pop() else { break };
        out.push(c);
        if let Some(&next) = lists[l].get(i + 1) {
            heap.push(Head(next, l, i + 1));
        }
    }
    out
}

/// Approximate K nearest neighbors of every row of `queries`. Distances are
/// estimated squared Euclidean distances.
pub fn search_batch(queries: &VectorMatrix, idx: &IvfRabitqIndex, sp: &SearchParams) -> Result<Vec<Neighbors>> {
    check_dims(idx.dims(), queries.dims())?;
    sp.validate(idx.n_clusters())?;
    let q_rot = idx.rotation().rotate(queries)?;
    let states: Vec<QueryState> = q_rot
        .as_slice()
        .par_chunks_exact(q_rot.dims())
        .map(|q| QueryState::from_rotated(q.to_vec(), sp, idx.c_eps()))
        .collect();
    let probes = select_clusters(&q_rot, idx.centroids(), sp.n_probe)?;

    let pairs: Vec<ProbePair> = probes
        .iter()
        .enumerate()
        .flat_map(|(q, list)| {
            list.iter().map(move |p| ProbePair {
                query: q as u32,
                cluster: p.cluster,
                dist2: p.dist2,
            })
        })
        .collect();
    let pairs = schedule_probes(pairs);

    let mut locals: Vec<Vec<Vec<Candidate>>> = vec![Vec::with_capacity(sp.n_probe); states.len()];
    let mut running: Vec<Vec<Candidate>> = vec![Vec::new(); states.len()];
    for wave in pairs.chunks(PAIRS_PER_WAVE) {
        let results: Vec<Vec<Candidate>> = wave
            .par_iter()
            .map(|p| {
                let qs = &states[p.query as usize];
                let threshold = if sp.prune { qs.threshold() } else { f32::INFINITY };
                cluster_local_search(qs, &idx.cluster(p.cluster as usize), p.dist2, sp, threshold)
            })
            .collect();
        for (p, local) in wave.iter().zip(results) {
            let q = p.query as usize;
            if local.is_empty() {
                continue;
            }
            let best = merge_topk(&[std::mem::take(&mut running[q]), local.clone()], sp.k);
            if best.len() == sp.k {
                states[q].lower_threshold(best[sp.k - 1].dist2);
            }
            running[q] = best;
            locals[q].push(local);
        }
    }

    Ok(locals
        .par_iter()
        .map(|lists| {
            let best = merge_topk(lists, sp.k);
            Neighbors {
                ids: best.iter().map(|c| c.pid).collect(),
                dists: best.iter().map(|c| c.dist2).collect(),
            }
        })
        .collect())
}
