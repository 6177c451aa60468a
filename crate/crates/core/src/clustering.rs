//! Coarse IVF partitioning: Lloyd's k-means with k-means++ seeding.
//!
//! Reductions run sequentially in point order so trained centroids are
//! bit-identical for a given seed no matter how many worker threads exist.
//! Only the per-point nearest-centroid search is parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::linalg::{squared_l2, squared_norm, VectorMatrix};

/// Cluster centers plus their cached squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    values: VectorMatrix,
    squared_norms: Vec<f64>,
}

impl Centroids {
    pub fn new(values: VectorMatrix) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::invalid("at least one centroid is required"));
        }
        let squared_norms = values.iter_rows().map(squared_norm).collect();
        Ok(Self {
            values,
            squared_norms,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.values.dims()
    }

    #[inline]
    pub fn centroid(&self, j: usize) -> &[f32] {
        self.values.row(j)
    }

    pub fn matrix(&self) -> &VectorMatrix {
        &self.values
    }

    pub fn squared_norms(&self) -> &[f64] {
        &self.squared_norms
    }
}

/// Index of the nearest centroid and the squared distance to it. Ties go to
/// the smaller centroid index.
#[inline]
fn nearest(x: &[f32], centroids: &VectorMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_l2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_with_dists(x: &VectorMatrix, centroids: &VectorMatrix) -> Vec<(usize, f64)> {
    x.as_slice()
        .par_chunks_exact(x.dims())
        .map(|row| nearest(row, centroids))
        .collect()
}

/// Nearest-centroid label for every row of `x`.
pub fn assign(x: &VectorMatrix, centroids: &Centroids) -> Result<Vec<u32>> {
    check_dims(centroids.dims(), x.dims())?;
    Ok(assign_with_dists(x, &centroids.values)
        .into_iter()
        .map(|(j, _)| j as u32)
        .collect())
}

/// Trains `n_k` centroids on the rows of `x`.
pub fn train_kmeans(x: &VectorMatrix, n_k: usize, iters: usize, seed: u64) -> Result<Centroids> {
    lloyd(x, n_k, iters, seed).map(|run| run.centroids)
}

#[derive(Debug)]
pub(crate) struct KMeansRun {
    pub centroids: Centroids,
    /// Objective after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: Vec<f64>,
}

pub(crate) fn lloyd(x: &VectorMatrix, n_k: usize, iters: usize, seed: u64) -> Result<KMeansRun> {
    if n_k == 0 || n_k > x.rows() {
        return Err(Error::invalid(format!(
            "cluster count {n_k} must be in 1..={}",
            x.rows()
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("k-means needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, n_k, &mut rng);
    let mut objective = Vec::with_capacity(iters + 1);

    for _ in 0..iters {
        let mut assignment = assign_with_dists(x, &centroids);
        objective.push(assignment.iter().map(|a| a.1).sum());
        reseed_empty(x, &mut centroids, &mut assignment);
        update_means(x, &mut centroids, &assignment);
    }

    // A final update can still empty a cluster; a few extra repair rounds
    // leave every returned centroid with at least one training point.
    for _ in 0..4 {
        let mut assignment = assign_with_dists(x, &centroids);
        objective.push(assignment.iter().map(|a| a.1).sum());
        if !reseed_empty(x, &mut centroids, &mut assignment) {
            break;
        }
        update_means(x, &mut centroids, &assignment);
    }

    Ok(KMeansRun {
        centroids: Centroids::new(centroids)?,
        objective,
    })
}

fn kmeans_plus_plus(x: &VectorMatrix, n_k: usize, rng: &mut ChaCha8Rng) -> VectorMatrix {
    let n = x.rows();
    let mut chosen = Vec::with_capacity(n_k);
    let mut is_chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;

    let mut min_d2: Vec<f64> = x
        .as_slice()
        .par_chunks_exact(x.dims())
        .map(|row| squared_l2(row, x.row(first)))
        .collect();

    while chosen.len() < n_k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in min_d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| {
                (0..n).rev().find(|&i| min_d2[i] > 0.0).unwrap_or(0)
            })
        } else {
            // Every remaining point duplicates a chosen one.
            (0..n).find(|&i| !is_chosen[i]).unwrap_or(0)
        };
        chosen.push(next);
        is_chosen[next] = true;
        let c = x.row(next);
        min_d2
            .par_iter_mut()
            .zip(x.as_slice().par_chunks_exact(x.dims()))
            .for_each(|(d, row)| *d = d.min(squared_l2(row, c)));
    }
    x.select_rows(&chosen)
}

/// Moves each empty centroid onto the point farthest from its current
/// centroid. Returns whether anything was reseeded.
fn reseed_empty(x: &VectorMatrix, centroids: &mut VectorMatrix, assignment: &mut [(usize, f64)]) -> bool {
    let mut counts = vec![0usize; centroids.rows()];
    for &(j, _) in assignment.iter() {
        counts[j] += 1;
    }
    let mut changed = false;
    for j in 0..centroids.rows() {
        if counts[j] > 0 {
            continue;
        }
        let mut far = None;
        for (i, &(owner, d)) in assignment.iter().enumerate() {
            if counts[owner] < 2 {
                continue;
            }
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        counts[assignment[i].0] -= 1;
        counts[j] = 1;
        assignment[i] = (j, 0.0);
        centroids.row_mut(j).copy_from_slice(x.row(i));
        changed = true;
    }
    changed
}

fn update_means(x: &VectorMatrix, centroids: &mut VectorMatrix, assignment: &[(usize, f64)]) {
    let d = x.dims();
    let k = centroids.rows();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (row, &(j, _)) in x.iter_rows().zip(assignment) {
        counts[j] += 1;
        for (s, &v) in sums[j * d..(j + 1) * d].iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let inv = 1.0 / counts[j] as f64;
        for (c, &s) in centroids.row_mut(j).iter_mut().zip(&sums[j * d..(j + 1) * d]) {
            *c = (s * inv) as f32;
        }
    }
}
