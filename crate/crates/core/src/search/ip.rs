//! Inner products between a query and 1-bit codes.
//!
//! Two interchangeable backends:
//!
//! * lookup tables: dimensions are split into blocks of [`LUT_BLOCK`] bits and
//!   each block's 16 possible bit patterns are pre-summed against the rotated
//!   query, so a 32-dimension word costs eight table lookups;
//! * bitwise: the query is quantized to `B_q`-bit two's-complement integers
//!   stored as `B_q` bit-planes, and `<msb, q_hat>` becomes a weighted sum of
//!   `popcount(msb & plane_j)` over 32-dimension words.

use crate::codec::words_per_vector;

/// Dimensions covered by one lookup table.
pub const LUT_BLOCK: usize = 4;
const LUT_SIZE: usize = 1 << LUT_BLOCK;
const BLOCKS_PER_WORD: usize = 32 / LUT_BLOCK;

/// Per-query lookup tables, one table of 16 entries per 4-dimension block.
/// Blocks past the last real dimension are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTables {
    tables: Vec<f32>,
}

impl LookupTables {
    pub fn n_tables(&self) -> usize {
        self.tables.len() / LUT_SIZE
    }

    /// Entry `pattern` of table `block`.
    #[inline]
    pub fn get(&self, block: usize, pattern: usize) -> f32 {
        self.tables[block * LUT_SIZE + pattern]
    }

    /// The eight tables that cover dimension group `group`.
    #[inline]
    pub(crate) fn word_tables(&self, group: usize) -> &[f32] {
        let per_word = BLOCKS_PER_WORD * LUT_SIZE;
        &self.tables[group * per_word..(group + 1) * per_word]
    }
}

/// `L_j[k] = sum of q[4j + i] over the set bits i of k`. Bit 0 of a pattern is
/// the first dimension of its block, matching the packed-word bit order.
pub fn build_luts(q_rot: &[f32]) -> LookupTables {
    let n_tables = words_per_vector(q_rot.len()) * BLOCKS_PER_WORD;
    let mut tables = vec![0.0f32; n_tables * LUT_SIZE];
    for (block, table) in tables.chunks_exact_mut(LUT_SIZE).enumerate() {
        let dim = |i: usize| q_rot.get(block * LUT_BLOCK + i).copied().unwrap_or(0.0) as f64;
        for (pattern, entry) in table.iter_mut().enumerate() {
            let sum: f64 = (0..LUT_BLOCK)
                .filter(|i| pattern >> i & 1 == 1)
                .map(dim)
                .sum();
            *entry = sum as f32;
        }
    }
    LookupTables { tables }
}

#[inline]
fn lut_word(tables: &[f32], w: u32) -> f32 {
    let mut s = 0.0f32;
    for nib in 0..BLOCKS_PER_WORD {
        let pattern = (w >> (nib * LUT_BLOCK)) as usize & (LUT_SIZE - 1);
        s += tables[nib * LUT_SIZE + pattern];
    }
    s
}

/// `<msb, q_rot>` for one vector given its MSB words in group order.
pub fn ip_lut(words: impl IntoIterator<Item = u32>, luts: &LookupTables) -> f32 {
    words
        .into_iter()
        .enumerate()
        .map(|(g, w)| lut_word(luts.word_tables(g), w))
        .sum()
}

/// A query quantized to `bits`-bit signed integers, stored as bit-planes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedQuery {
    bits: u8,
    delta: f32,
    /// `planes[g * bits + j]`: bit `j` of the two's-complement value of each
    /// dimension in group `g`.
    planes: Vec<u32>,
    values: Vec<i8>,
}

impl QuantizedQuery {
    /// Symmetric scalar quantization with step
    /// `max |q_i| / (2^(bits-1) - 1)` (1 for a zero query).
    pub fn new(q_rot: &[f32], bits: u8) -> Self {
        assert!((2..=8).contains(&bits), "query bits must be in 2..=8");
        let hi = (1i32 << (bits - 1)) - 1;
        let lo = -(1i32 << (bits - 1));
        let max = q_rot.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        let delta = if max > 0.0 { max / hi as f32 } else { 1.0 };
        let values: Vec<i8> = q_rot
            .iter()
            .map(|&v| ((v / delta).round() as i32).clamp(lo, hi) as i8)
            .collect();

        let groups = words_per_vector(q_rot.len());
        let b = bits as usize;
        let mut planes = vec![0u32; groups * b];
        let mask = (1u32 << bits) - 1;
        for (i, &v) in values.iter().enumerate() {
            let twos = v as i32 as u32 & mask;
            for j in 0..b {
                if twos >> j & 1 == 1 {
                    planes[(i / 32) * b + j] |= 1 << (i % 32);
                }
            }
        }
        Self {
            bits,
            delta,
            planes,
            values,
        }
    }

    #[inline]
    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Quantization step: `q_rot[i] ~= delta * values[i]`.
    #[inline]
    pub fn delta(&self) -> f32 {
        self.delta
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// `||q_rot - delta * values||`.
    pub fn residual_norm(&self, q_rot: &[f32]) -> f64 {
        q_rot
            .iter()
            .zip(&self.values)
            .map(|(&q, &v)| (q as f64 - self.delta as f64 * v as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub(crate) fn group_planes(&self, group: usize) -> &[u32] {
        let b = self.bits as usize;
        &self.planes[group * b..(group + 1) * b]
    }
}

#[inline]
fn bitwise_word(planes: &[u32], w: u32) -> i64 {
    let sign = planes.len() - 1;
    let mut acc = 0i64;
    for (j, &p) in planes[..sign].iter().enumerate() {
        acc += ((w & p).count_ones() as i64) << j;
    }
    acc - (((w & planes[sign]).count_ones() as i64) << sign)
}

/// `<msb, q_hat>` for one vector, 32 dimensions per word.
pub fn ip_bitwise(words: impl IntoIterator<Item = u32>, query: &QuantizedQuery) -> i64 {
    words
        .into_iter()
        .enumerate()
        .map(|(g, w)| bitwise_word(query.group_planes(g), w))
        .sum()
}

/// LUT scan of a whole cluster's interleaved words; writes `<msb_v, q_rot>`
/// for each of the `n` vectors into `out`.
pub(crate) fn scan_lut(words: &[u32], n: usize, luts: &LookupTables, out: &mut [f32]) {
    out[..n].fill(0.0);
    for (g, group) in words.chunks_exact(n.max(1)).enumerate().take(words.len() / n.max(1)) {
        let tables = luts.word_tables(g);
        for (acc, &w) in out.iter_mut().zip(group) {
            *acc += lut_word(tables, w);
        }
    }
}

/// Bitwise scan of a whole cluster; writes `<msb_v, q_hat>` into `out`.
pub(crate) fn scan_bitwise(words: &[u32], n: usize, query: &QuantizedQuery, out: &mut [i64]) {
    out[..n].fill(0);
    for (g, group) in words.chunks_exact(n.max(1)).enumerate().take(words.len() / n.max(1)) {
        let planes = query.group_planes(g);
        for (acc, &w) in out.iter_mut().zip(group) {
            *acc += bitwise_word(planes, w);
        }
    }
}

/// `<msb, q_rot>` in full precision, used when refinement needs the exact
/// binary inner product in bitwise mode.
pub(crate) fn ip_msb_exact(words: impl IntoIterator<Item = u32>, q_rot: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (g, mut w) in words.into_iter().enumerate() {
        while w != 0 {
            let k = w.trailing_zeros() as usize;
            acc += q_rot[g * 32 + k] as f64;
            w &= w - 1;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::pack_interleaved;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lut_entries() {
        let q = [1.0f32, 2.0, 4.0, 8.0, -1.0, 0.5];
        let l = build_luts(&q);
        assert_eq!(l.n_tables(), 8);
        for j in 0..l.n_tables() {
            assert_eq!(l.get(j, 0), 0.0);
        }
        assert_eq!(l.get(0, 15), 15.0);
        assert_eq!(l.get(0, 1), 1.0);
        assert_eq!(l.get(0, 0b1010), 10.0);
        // Second block is (-1, 0.5, 0, 0).
        assert_eq!(l.get(1, 15), -0.5);
        assert_eq!(l.get(2, 15), 0.0);
    }

    #[test]
    fn lut_ip_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<f32> = (0..70).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l = build_luts(&q);
        let zeros = pack_interleaved(&[0; 70], 1, 70);
        assert_eq!(ip_lut(zeros.vector_words(0), &l), 0.0);
        let ones = pack_interleaved(&[1; 70], 1, 70);
        let total: f32 = q.iter().sum();
        assert!((ip_lut(ones.vector_words(0), &l) - total).abs() < 1e-4);
    }

    #[test]
    fn bitwise_examples() {
        let ones = pack_interleaved(&[1; 32], 1, 32);
        let q1 = QuantizedQuery::new(&[1.0; 32], 4);
        // max = 1, delta = 1/7: every value rounds to 7, not 1.
        assert!(q1.values().iter().all(|&v| v == 7));
        assert_eq!(ip_bitwise(ones.vector_words(0), &q1), 7 * 32);

        // Only plane 0 set: q_hat = 1 everywhere.
        let mut planes = QuantizedQuery::new(&[0.0; 32], 4);
        planes.planes = vec![u32::MAX, 0, 0, 0];
        assert_eq!(ip_bitwise(ones.vector_words(0), &planes), 32);
        // Only the sign plane set: q_hat = -8 everywhere.
        planes.planes = vec![0, 0, 0, u32::MAX];
        assert_eq!(ip_bitwise(ones.vector_words(0), &planes), -256);
    }

    #[test]
    fn quantized_query_conventions() {
        let z = QuantizedQuery::new(&[0.0; 40], 4);
        assert_eq!(z.delta(), 1.0);
        assert!(z.planes.iter().all(|&p| p == 0));

        let q = [7.0f32, -3.4, 2.6, 0.4, -7.0];
        let qq = QuantizedQuery::new(&q, 4);
        assert_eq!(qq.delta(), 1.0);
        assert_eq!(qq.values(), &[7, -3, 3, 0, -7]);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for bits in 2..=8 {
            let q: Vec<f32> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let qq = QuantizedQuery::new(&q, bits);
            for (&v, &x) in qq.values().iter().zip(&q) {
                assert!((qq.delta() * v as f32 - x).abs() <= qq.delta() / 2.0 * (1.0 + 1e-5));
            }
        }
    }

    #[test]
    fn scans_match_single_vector_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, dims) = (13, 100);
        let bits: Vec<u8> = (0..n * dims).map(|_| rng.gen_range(0..2)).collect();
        let plane = pack_interleaved(&bits, n, dims);
        let q: Vec<f32> = (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let luts = build_luts(&q);
        let qq = QuantizedQuery::new(&q, 5);
        let mut f = vec![0.0; n];
        let mut i = vec![0; n];
        scan_lut(plane.words(), n, &luts, &mut f);
        scan_bitwise(plane.words(), n, &qq, &mut i);
        for v in 0..n {
            assert_eq!(f[v], ip_lut(plane.vector_words(v), &luts));
            assert_eq!(i[v], ip_bitwise(plane.vector_words(v), &qq));
            let exact = ip_msb_exact(plane.vector_words(v), &q);
            assert!((exact - f[v] as f64).abs() < 1e-4);
        }
    }
}
