//! Immutable IVF-RaBitQ index.
//!
//! Vectors are grouped by cluster in a flattened CSR-like layout: cluster `j`
//! owns rows `offsets[j]..offsets[j + 1]` of every per-vector array. Each
//! array is used by one search stage: MSB words and short factors by the
//! filter, ex-codes and long factors by refinement, pids by the final merge.

mod io;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use io::{FORMAT_VERSION, HEADER_LEN, MAGIC};

use crate::clustering::{assign, train_kmeans, Centroids};
use crate::codec::{
    compute_factors, excode_bytes_per_vector, normalize_residual, pack_excode, pack_interleaved,
    quantize_vector, split_planes, words_per_vector, LongFactors, QuantizationParams, ShortFactors,
};
use crate::error::{Error, Result};
use crate::linalg::{Rotation, VectorMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    /// Number of IVF clusters; `None` picks `ceil(sqrt(N))`.
    pub n_clusters: Option<usize>,
    pub kmeans_iters: usize,
    /// Fraction of the data used to train k-means. The sample never holds
    /// fewer than `10 * n_clusters` vectors (capped at `N`).
    pub train_fraction: f64,
    pub quantization: QuantizationParams,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            n_clusters: None,
            kmeans_iters: 20,
            train_fraction: 0.1,
            quantization: QuantizationParams::default(),
            seed: 42,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        self.quantization.validate()?;
        if self.kmeans_iters == 0 {
            return Err(Error::invalid("kmeans_iters must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.n_clusters == Some(0) {
            return Err(Error::invalid("n_clusters must be at least 1"));
        }
        Ok(())
    }

    pub fn resolve_n_clusters(&self, n: usize) -> usize {
        self.n_clusters
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .max(1)
    }

    pub fn training_size(&self, n: usize) -> usize {
        let n_k = self.resolve_n_clusters(n);
        let by_fraction = (self.train_fraction * n as f64).ceil() as usize;
        by_fraction.max(10 * n_k).min(n)
    }
}

/// Counters collected while encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Vectors equal to their centroid (zero residual).
    pub degenerate: usize,
    /// Vectors whose code cosine had to be clamped.
    pub low_quality: usize,
    /// Clusters that received no vectors.
    pub empty_clusters: usize,
}

/// Borrowed view of one cluster's arrays.
#[derive(Debug, Clone, Copy)]
pub struct ClusterView<'a> {
    pub id: usize,
    pub len: usize,
    pub dims: usize,
    pub bits: u8,
    /// Rotated centroid.
    pub centroid: &'a [f32],
    /// Interleaved MSB words: word of group `g` for vector `v` at `g * len + v`.
    pub msb_words: &'a [u32],
    pub excodes: &'a [u8],
    pub short_factors: &'a [ShortFactors],
    pub long_factors: &'a [LongFactors],
    pub pids: &'a [u64],
}

impl ClusterView<'_> {
    pub fn excode_stride(&self) -> usize {
        if self.bits > 1 {
            excode_bytes_per_vector(self.dims, self.bits)
        } else {
            0
        }
    }

    pub fn excode(&self, v: usize) -> &[u8] {
        let stride = self.excode_stride();
        &self.excodes[v * stride..(v + 1) * stride]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfRabitqIndex {
    pub(crate) dims: usize,
    pub(crate) bits: u8,
    pub(crate) c_eps: f32,
    pub(crate) seed: u64,
    pub(crate) rotation: Rotation,
    pub(crate) centroids: Centroids,
    pub(crate) offsets: Vec<u64>,
    pub(crate) msb_words: Vec<u32>,
    pub(crate) excodes: Vec<u8>,
    pub(crate) short_factors: Vec<ShortFactors>,
    pub(crate) long_factors: Vec<LongFactors>,
    pub(crate) pids: Vec<u64>,
}

struct EncodedCluster {
    msb_words: Vec<u32>,
    excodes: Vec<u8>,
    short: Vec<ShortFactors>,
    long: Vec<LongFactors>,
    degenerate: usize,
    low_quality: usize,
}

pub fn build_index(x: &VectorMatrix, params: &BuildParams) -> Result<IvfRabitqIndex> {
    IvfRabitqIndex::build(x, params).map(|(idx, _)| idx)
}

impl IvfRabitqIndex {
    /// Trains clusters, assigns and encodes every row of `x`. Row `i` gets
    /// id `i`.
    pub fn build(x: &VectorMatrix, params: &BuildParams) -> Result<(Self, BuildReport)> {
        params.validate()?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::invalid("cannot build an index over zero vectors"));
        }
        let dims = x.dims();
        let n_k = params.resolve_n_clusters(n);
        if n_k > n {
            return Err(Error::invalid(format!("{n_k} clusters requested for {n} vectors")));
        }

        let train_n = params.training_size(n);
        let centroids = if train_n == n {
            train_kmeans(x, n_k, params.kmeans_iters, params.seed.wrapping_add(1))?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut rows = sample(&mut rng, n, train_n).into_vec();
            rows.sort_unstable();
            let train = x.select_rows(&rows);
            train_kmeans(&train, n_k, params.kmeans_iters, params.seed.wrapping_add(1))?
        };
        let labels = assign(x, &centroids)?;
        let rotation = Rotation::random(dims, params.seed.wrapping_add(2))?;
        Self::encode(x, &labels, &centroids, rotation, params)
    }

    /// Encodes `x` against fixed centroids and labels.
    pub(crate) fn encode(
        x: &VectorMatrix,
        labels: &[u32],
        centroids: &Centroids,
        rotation: Rotation,
        params: &BuildParams,
    ) -> Result<(Self, BuildReport)> {
        let n_k = centroids.len();
        let dims = x.dims();
        let qp = params.quantization;

        let mut members: Vec<Vec<u64>> = vec![Vec::new(); n_k];
        for (i, &l) in labels.iter().enumerate() {
            members[l as usize].push(i as u64);
        }
        let mut offsets = Vec::with_capacity(n_k + 1);
        offsets.push(0u64);
        for m in &members {
            offsets.push(offsets.last().unwrap() + m.len() as u64);
        }

        let rotated_centroids = Centroids::new(rotation.rotate(centroids.matrix())?)?;

        let encoded: Vec<EncodedCluster> = members
            .par_iter()
            .enumerate()
            .map(|(j, ids)| {
                let c = centroids.centroid(j);
                let c_rot = rotated_centroids.centroid(j);
                let per_vector: Vec<_> = ids
                    .par_iter()
                    .map(|&id| -> Result<_> {
                        let residual = normalize_residual(x.row(id as usize), c)?;
                        let o_rot = rotation.apply_vec(&residual.unit)?;
                        let (code, _) = quantize_vector(&o_rot, &qp);
                        let factors = compute_factors(&code, &o_rot, residual.norm, c_rot, qp.c_eps)?;
                        Ok((split_planes(&code), factors, residual.is_degenerate()))
                    })
                    .collect::<Result<_>>()?;

                let mut msb = Vec::with_capacity(ids.len() * dims);
                let mut excodes = Vec::new();
                let mut out = EncodedCluster {
                    msb_words: Vec::new(),
                    excodes: Vec::new(),
                    short: Vec::with_capacity(ids.len()),
                    long: Vec::with_capacity(ids.len()),
                    degenerate: 0,
                    low_quality: 0,
                };
                for (planes, f, degenerate) in per_vector {
                    msb.extend_from_slice(&planes.msb);
                    if qp.bits > 1 {
                        pack_excode(&planes.excode, qp.bits, &mut excodes);
                    }
                    out.short.push(f.short);
                    out.long.push(f.long);
                    out.degenerate += usize::from(degenerate);
                    out.low_quality += usize::from(f.low_quality);
                }
                out.msb_words = pack_interleaved(&msb, ids.len(), dims).into_words();
                out.excodes = excodes;
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut report = BuildReport {
            empty_clusters: members.iter().filter(|m| m.is_empty()).count(),
            ..BuildReport::default()
        };
        let n = x.rows();
        let mut idx = Self {
            dims,
            bits: qp.bits,
            c_eps: qp.c_eps,
            seed: params.seed,
            rotation,
            centroids: rotated_centroids,
            offsets,
            msb_words: Vec::with_capacity(n * words_per_vector(dims)),
            excodes: Vec::new(),
            short_factors: Vec::with_capacity(n),
            long_factors: Vec::with_capacity(n),
            pids: members.into_iter().flatten().collect(),
        };
        for c in encoded {
            idx.msb_words.extend(c.msb_words);
            idx.excodes.extend(c.excodes);
            idx.short_factors.extend(c.short);
            idx.long_factors.extend(c.long);
            report.degenerate += c.degenerate;
            report.low_quality += c.low_quality;
        }
        Ok((idx, report))
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn bits(&self) -> u8 {
        self.bits
    }

    #[inline]
    pub fn c_eps(&self) -> f32 {
        self.c_eps
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of indexed vectors.
    #[inline]
    pub fn len(&self) -> usize {
        self.pids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pids.is_empty()
    }

    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    /// Centroids in the rotated space.
    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn pids(&self) -> &[u64] {
        &self.pids
    }

    pub fn cluster(&self, j: usize) -> ClusterView<'_> {
        let start = self.offsets[j] as usize;
        let end = self.offsets[j + 1] as usize;
        let words = words_per_vector(self.dims);
        let ex = if self.bits > 1 {
            excode_bytes_per_vector(self.dims, self.bits)
        } else {
            0
        };
        ClusterView {
            id: j,
            len: end - start,
            dims: self.dims,
            bits: self.bits,
            centroid: self.centroids.centroid(j),
            msb_words: &self.msb_words[start * words..end * words],
            excodes: &self.excodes[start * ex..end * ex],
            short_factors: &self.short_factors[start..end],
            long_factors: &self.long_factors[start..end],
            pids: &self.pids[start..end],
        }
    }
}
