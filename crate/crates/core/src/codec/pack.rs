//! Bit layouts for the stored codes.
//!
//! Most-significant-bit planes use a dimension-group interleaved layout:
//! dimensions are grouped 32 to a `u32` word, and for each group the words of
//! all vectors in a cluster are contiguous before the next group starts.
//! Ex-codes are stored as a little-endian bit stream per vector, padded to a
//! whole number of bytes.

/// Number of 32-bit words needed for one vector's MSB plane.
#[inline]
pub fn words_per_vector(dims: usize) -> usize {
    dims.div_ceil(32)
}

/// Bytes needed for one vector's ex-code at `bits` total bits per dimension.
#[inline]
pub fn excode_bytes_per_vector(dims: usize, bits: u8) -> usize {
    (dims * (bits as usize - 1)).div_ceil(8)
}

/// Interleaved MSB words of `n` vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedPlane {
    n: usize,
    dims: usize,
    words: Vec<u32>,
}

impl PackedPlane {
    pub fn from_words(n: usize, dims: usize, words: Vec<u32>) -> Option<Self> {
        (words.len() == n * words_per_vector(dims)).then_some(Self { n, dims, words })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn into_words(self) -> Vec<u32> {
        self.words
    }

    /// Word holding dimensions `32 * group ..` of vector `v`.
    #[inline]
    pub fn word(&self, group: usize, v: usize) -> u32 {
        self.words[group * self.n + v]
    }

    /// The words of vector `v`, one per dimension group.
    pub fn vector_words(&self, v: usize) -> impl Iterator<Item = u32> + '_ {
        (0..words_per_vector(self.dims)).map(move |g| self.word(g, v))
    }

    pub fn bit(&self, v: usize, dim: usize) -> bool {
        self.word(dim / 32, v) >> (dim % 32) & 1 == 1
    }

    /// Expands back into one `0/1` byte per (vector, dimension), row-major.
    pub fn unpack(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.n * self.dims);
        for v in 0..self.n {
            out.extend((0..self.dims).map(|d| u8::from(self.bit(v, d))));
        }
        out
    }
}

/// Packs `n` row-major `0/1` bit rows of width `dims` into the interleaved
/// layout. Padding bits past `dims` are zero.
pub fn pack_interleaved(bits: &[u8], n: usize, dims: usize) -> PackedPlane {
    assert_eq!(bits.len(), n * dims, "bit matrix shape mismatch");
    let groups = words_per_vector(dims);
    let mut words = vec![0u32; n * groups];
    for v in 0..n {
        let row = &bits[v * dims..(v + 1) * dims];
        for (d, &b) in row.iter().enumerate() {
            if b != 0 {
                words[(d / 32) * n + v] |= 1 << (d % 32);
            }
        }
    }
    PackedPlane { n, dims, words }
}

/// Appends one vector's ex-code (each value `< 2^(bits-1)`) to `out`.
pub fn pack_excode(excode: &[u8], bits: u8, out: &mut Vec<u8>) {
    let width = bits as usize - 1;
    let start = out.len();
    out.resize(start + excode_bytes_per_vector(excode.len(), bits), 0);
    let buf = &mut out[start..];
    for (i, &e) in excode.iter().enumerate() {
        let mut value = e as u32;
        let mut offset = i * width;
        let mut remaining = width;
        while remaining > 0 {
            let byte = offset / 8;
            let shift = offset % 8;
            let take = remaining.min(8 - shift);
            buf[byte] |= ((value & ((1 << take) - 1)) << shift) as u8;
            value >>= take;
            offset += take;
            remaining -= take;
        }
    }
}

/// Reads dimension `i` of an ex-code packed by [`pack_excode`].
#[inline]
pub fn excode_at(packed: &[u8], i: usize, bits: u8) -> u8 {
    let width = bits as usize - 1;
    let offset = i * width;
    let byte = offset / 8;
    let shift = offset % 8;
    // Two bytes always cover a value of at most 7 bits.
    let lo = packed[byte] as u32;
    let hi = packed.get(byte + 1).copied().unwrap_or(0) as u32;
    (((lo | hi << 8) >> shift) & ((1 << width) - 1)) as u8
}

pub fn unpack_excode(packed: &[u8], dims: usize, bits: u8) -> Vec<u8> {
    (0..dims).map(|i| excode_at(packed, i, bits)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_word() {
        let p = pack_interleaved(&[1; 32], 1, 32);
        assert_eq!(p.words(), &[0xFFFF_FFFF]);
    }

    #[test]
    fn group_major_order() {
        // Vector v, group g gets a distinctive bit pattern.
        let mut bits = vec![0u8; 2 * 64];
        bits[0] = 1; // v0 g0 dim 0
        bits[1] = 1; // v0 g0 dim 1
        bits[64 + 2] = 1; // v1 g0 dim 2
        bits[32 + 3] = 1; // v0 g1 dim 35
        bits[64 + 32 + 4] = 1; // v1 g1 dim 36
        let p = pack_interleaved(&bits, 2, 64);
        assert_eq!(p.words(), &[0b11, 0b100, 0b1000, 0b10000]);
    }

    #[test]
    fn lsb_first_bit_order() {
        let mut bits = vec![0u8; 32];
        bits[5] = 1;
        assert_eq!(pack_interleaved(&bits, 1, 32).words(), &[1 << 5]);
    }

    #[test]
    fn padding_is_zero() {
        let p = pack_interleaved(&[1; 3 * 40], 3, 40);
        assert_eq!(p.words().len(), 6);
        for v in 0..3 {
            assert_eq!(p.word(1, v), 0xFF);
        }
    }

    #[test]
    fn empty_plane() {
        let p = pack_interleaved(&[], 0, 100);
        assert!(p.is_empty());
        assert!(p.words().is_empty());
    }

    #[test]
    fn excode_layout() {
        // Two bits per dimension: values 1, 2, 3, 0 -> 0b00_11_10_01.
        let mut out = Vec::new();
        pack_excode(&[1, 2, 3, 0], 3, &mut out);
        assert_eq!(out, vec![0b0011_1001]);
        // Seven bits per dimension straddle byte boundaries.
        let mut out = Vec::new();
        pack_excode(&[127, 1], 8, &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!(unpack_excode(&out, 2, 8), vec![127, 1]);
    }

    proptest! {
        #[test]
        fn interleave_round_trip(n in 0usize..9, dims in 1usize..100, seed in any::<u64>()) {
            let bits: Vec<u8> = (0..n * dims)
                .map(|i| ((seed.rotate_left((i % 64) as u32) ^ i as u64) & 1) as u8)
                .collect();
            let p = pack_interleaved(&bits, n, dims);
            prop_assert_eq!(p.unpack(), bits);
        }

        #[test]
        fn excode_round_trip(bits in 2u8..=8, values in proptest::collection::vec(any::<u8>(), 1..70)) {
            let mask = (1u16 << (bits - 1)) - 1;
            let ex: Vec<u8> = values.iter().map(|&v| (v as u16 & mask) as u8).collect();
            let mut out = vec![0xAA];
            pack_excode(&ex, bits, &mut out);
            prop_assert_eq!(out.len(), 1 + excode_bytes_per_vector(ex.len(), bits));
            prop_assert_eq!(unpack_excode(&out[1..], ex.len(), bits), ex);
        }
    }
}
