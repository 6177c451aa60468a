//! Dense vector storage, random orthogonal rotations and the exact k-NN
//! oracle used for ground truth.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};

/// Row-major matrix of `f32` vectors, one vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMatrix {
    rows: usize,
    dims: usize,
    values: Vec<f32>,
}

impl VectorMatrix {
    /// Wraps `values` as a `rows x dims` matrix. All entries must be finite.
    pub fn new(rows: usize, dims: usize, values: Vec<f32>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("vector dimensionality must be at least 1"));
        }
        if values.len() != rows * dims {
            return Err(Error::invalid(format!(
                "expected {} values for a {rows}x{dims} matrix, got {}",
                rows * dims,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self { rows, dims, values })
    }

    pub fn zeros(rows: usize, dims: usize) -> Self {
        Self {
            rows,
            dims,
            values: vec![0.0; rows * dims],
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("cannot infer dimensionality from zero rows"));
        };
        let dims = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            check_dims(dims, row.as_ref().len())?;
            values.extend_from_slice(row.as_ref());
        }
        Self::new(rows.len(), dims, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dims)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dims: self.dims,
            values,
        }
    }
}

/// Squared Euclidean distance with a 64-bit accumulator.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
pub fn squared_norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| x as f64 * x as f64).sum()
}

/// A `dims x dims` orthogonal matrix shared by data, centroids and queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    dims: usize,
    seed: u64,
    matrix: Vec<f32>,
}

impl Rotation {
    /// Draws a Haar-random orthogonal matrix: Gaussian fill, QR, then sign
    /// correction so the triangular factor has a positive diagonal.
    pub fn random(dims: usize, seed: u64) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("rotation dimensionality must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaussian: Vec<f64> = (0..dims * dims)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let qr = DMatrix::from_row_slice(dims, dims, &gaussian).qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..dims {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let mut matrix = Vec::with_capacity(dims * dims);
        for i in 0..dims {
            for j in 0..dims {
                matrix.push(q[(i, j)] as f32);
            }
        }
        Ok(Self { dims, seed, matrix })
    }

    pub fn identity(dims: usize) -> Self {
        let mut matrix = vec![0.0; dims * dims];
        for i in 0..dims {
            matrix[i * dims + i] = 1.0;
        }
        Self {
            dims,
            seed: 0,
            matrix,
        }
    }

    /// Reassembles a rotation from serialized parts. Orthogonality is not
    /// re-verified here.
    pub fn from_parts(dims: usize, seed: u64, matrix: Vec<f32>) -> Result<Self> {
        if matrix.len() != dims * dims {
            return Err(Error::invalid(format!(
                "rotation for {dims} dims needs {} entries, got {}",
                dims * dims,
                matrix.len()
            )));
        }
        Ok(Self { dims, seed, matrix })
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major entries.
    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn transpose(&self) -> Self {
        let d = self.dims;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[j * d + i] = self.matrix[i * d + j];
            }
        }
        Self {
            dims: d,
            seed: self.seed,
            matrix,
        }
    }

    /// `out = R * x`.
    pub fn apply(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.dims);
        debug_assert_eq!(out.len(), self.dims);
        for (row, o) in self.matrix.chunks_exact(self.dims).zip(out.iter_mut()) {
            *o = dot(row, x) as f32;
        }
    }

    pub fn apply_vec(&self, x: &[f32]) -> Result<Vec<f32>> {
        check_dims(self.dims, x.len())?;
        let mut out = vec![0.0; self.dims];
        self.apply(x, &mut out);
        Ok(out)
    }

    /// Rotates every row of `x`.
    pub fn rotate(&self, x: &VectorMatrix) -> Result<VectorMatrix> {
        check_dims(self.dims, x.dims())?;
        let mut out = VectorMatrix::zeros(x.rows(), self.dims);
        out.values
            .par_chunks_mut(self.dims)
            .zip(x.values.par_chunks(self.dims))
            .for_each(|(o, row)| self.apply(row, o));
        Ok(out)
    }

    /// Largest absolute entry of `R * R^T - I`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dims;
        let mut worst = 0.0f64;
        for i in 0..d {
            let ri = &self.matrix[i * d..(i + 1) * d];
            for j in 0..d {
                let rj = &self.matrix[j * d..(j + 1) * d];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(ri, rj) - target).abs());
            }
        }
        worst
    }
}

/// Ids and squared distances of the nearest neighbors of one query,
/// ascending by distance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighbors {
    pub ids: Vec<u64>,
    pub dists: Vec<f32>,
}

impl Neighbors {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Total order on (distance, id): ascending distance, smaller id first on ties.
#[inline]
pub(crate) fn cmp_dist_id(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force K nearest neighbors of every query. When `k` exceeds the base
/// size every base vector is returned.
pub fn exact_knn(base: &VectorMatrix, queries: &VectorMatrix, k: usize) -> Result<Vec<Neighbors>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if base.is_empty() {
        return Err(Error::invalid("base set is empty"));
    }
    check_dims(base.dims(), queries.dims())?;
    let k = k.min(base.rows());

    Ok(queries
        .as_slice()
        .par_chunks_exact(queries.dims())
        .map(|q| {
            let mut all: Vec<(f64, u64)> = base
                .iter_rows()
                .enumerate()
                .map(|(i, b)| (squared_l2(q, b), i as u64))
                .collect();
            if k < all.len() {
                all.select_nth_unstable_by(k - 1, |a, b| cmp_dist_id(*a, *b));
                all.truncate(k);
            }
            all.sort_unstable_by(|a, b| cmp_dist_id(*a, *b));
            Neighbors {
                ids: all.iter().map(|&(_, id)| id).collect(),
                dists: all.iter().map(|&(d, _)| d as f32).collect(),
            }
        })
        .collect())
}
