//! RaBitQ encoding of normalized, rotated residual vectors.
//!
//! A residual `o_r - c` is normalized to a unit vector `o`, rotated to `o'`,
//! and quantized to a `B`-bit unsigned code `u`. The signed code
//! `x = u - (2^B - 1) / 2` approximates the direction of `o'`. The code is
//! stored as two parts: the most significant bit of each dimension (the
//! 1-bit code used by the filter stage) and the remaining `B - 1` bits (the
//! ex-code used for refinement).
//!
//! Distances are estimated through per-vector factors. With `d_o = ||o_r - c||`,
//! a rotated centroid `c'` and a rotated query `q'`:
//!
//! ```text
//! ||o_r - q||^2 ~= d_o^2 + ||q - c||^2 - 2 d_o <x, q' - c'> / (||x|| cos)
//!              = add + ||q - c||^2 - scale * <x, q'>
//! ```
//!
//! where `cos = <x, o'> / ||x||`, `scale = 2 d_o / (||x|| cos)` and
//! `add = d_o^2 + scale * <x, c'>`. The short factors apply this to the
//! 1-bit code `x_b = msb - 1/2`, the long factors to the full code.

mod pack;
mod quantize;

pub use pack::{
    excode_at, excode_bytes_per_vector, pack_excode, pack_interleaved, unpack_excode,
    words_per_vector, PackedPlane,
};
pub use quantize::{code_cosine, quantize_vector};

use crate::error::{check_dims, Error, Result};

/// Smallest cosine used when a code is (numerically) orthogonal to its
/// vector.
pub const MIN_COSINE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationParams {
    /// Bits per dimension, 1 to 8.
    pub bits: u8,
    /// Samples in the coarse pass of the rescaling-factor search.
    pub n_coarse: usize,
    /// Samples in the fine pass.
    pub n_fine: usize,
    /// Multiplier of the 1-bit estimator's error bound.
    pub c_eps: f32,
}

impl Default for QuantizationParams {
    fn default() -> Self {
        Self {
            bits: 8,
            n_coarse: 64,
            n_fine: 32,
            c_eps: 1.9,
        }
    }
}

impl QuantizationParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.bits) {
            return Err(Error::invalid(format!("bits must be in 1..=8, got {}", self.bits)));
        }
        if self.n_coarse < 2 || self.n_fine < 2 {
            return Err(Error::invalid("grid search needs at least 2 coarse and 2 fine samples"));
        }
        if !(self.c_eps.is_finite() && self.c_eps >= 0.0) {
            return Err(Error::invalid(format!("c_eps must be finite and non-negative, got {}", self.c_eps)));
        }
        Ok(())
    }
}

/// Per-dimension unsigned code in `[0, 2^B - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsignedCode {
    bits: u8,
    values: Vec<u8>,
}

impl UnsignedCode {
    pub fn new(bits: u8, values: Vec<u8>) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::invalid(format!("bits must be in 1..=8, got {bits}")));
        }
        let max = (1u32 << bits) - 1;
        if let Some(v) = values.iter().find(|&&v| v as u32 > max) {
            return Err(Error::invalid(format!("code value {v} exceeds {max}")));
        }
        Ok(Self { bits, values })
    }

    pub(crate) fn from_raw(bits: u8, values: Vec<u8>) -> Self {
        Self { bits, values }
    }

    /// The code whose signed value is +1/2 in every dimension.
    pub fn midpoint(dims: usize, bits: u8) -> Self {
        Self {
            bits,
            values: vec![(1u32 << (bits - 1)) as u8; dims],
        }
    }

    #[inline]
    pub fn bits(&self) -> u8 {
        self.bits
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// `(2^B - 1) / 2`, the offset between unsigned and signed codes.
    #[inline]
    pub fn shift(&self) -> f64 {
        ((1u32 << self.bits) - 1) as f64 / 2.0
    }

    pub fn signed(&self) -> Vec<f64> {
        let shift = self.shift();
        self.values.iter().map(|&u| u as f64 - shift).collect()
    }
}

/// MSB plane and ex-code of an [`UnsignedCode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlanes {
    pub msb: Vec<u8>,
    /// Empty when `B = 1`.
    pub excode: Vec<u8>,
}

pub fn split_planes(u: &UnsignedCode) -> BitPlanes {
    let top = u.bits - 1;
    let msb = u.values.iter().map(|&v| v >> top).collect();
    let excode = if u.bits == 1 {
        Vec::new()
    } else {
        let mask = (1u8 << top) - 1;
        u.values.iter().map(|&v| v & mask).collect()
    };
    BitPlanes { msb, excode }
}

/// Factors for the 1-bit estimate and its error bound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShortFactors {
    pub add: f32,
    pub scale: f32,
    pub err: f32,
}

/// Factors for the refined full-code estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LongFactors {
    pub add: f32,
    pub scale: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VectorFactors {
    pub short: ShortFactors,
    pub long: LongFactors,
    /// Set when a code had non-positive cosine with its vector and the
    /// cosine was clamped to [`MIN_COSINE`].
    pub low_quality: bool,
}

/// A unit residual direction and the residual's length.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub unit: Vec<f32>,
    pub norm: f64,
}

impl Residual {
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.norm == 0.0
    }
}

pub fn normalize_residual(o_r: &[f32], c: &[f32]) -> Result<Residual> {
    check_dims(c.len(), o_r.len())?;
    if o_r.iter().chain(c).any(|v| !v.is_finite()) {
        return Err(Error::invalid("residual inputs must be finite"));
    }
    let diff: Vec<f64> = o_r.iter().zip(c).map(|(&a, &b)| a as f64 - b as f64).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(Residual {
            unit: vec![0.0; o_r.len()],
            norm: 0.0,
        });
    }
    Ok(Residual {
        unit: diff.iter().map(|d| (d / norm) as f32).collect(),
        norm,
    })
}

/// `(||x||, <x, o'> / ||x||, <x, c'>)` for a signed code `x`.
fn code_stats(signed: impl Iterator<Item = f64> + Clone, o: &[f32], c: &[f32]) -> (f64, f64, f64) {
    let mut norm2 = 0.0;
    let mut ip_o = 0.0;
    let mut ip_c = 0.0;
    for ((x, &ov), &cv) in signed.zip(o).zip(c) {
        norm2 += x * x;
        ip_o += x * ov as f64;
        ip_c += x * cv as f64;
    }
    let norm = norm2.sqrt();
    (norm, ip_o / norm, ip_c)
}

/// Computes the short and long factors of one encoded vector.
///
/// `d_o` is the residual length and `c_prime` the rotated centroid of the
/// vector's cluster.
pub fn compute_factors(
    u: &UnsignedCode,
    o_prime: &[f32],
    d_o: f64,
    c_prime: &[f32],
    c_eps: f32,
) -> Result<VectorFactors> {
    check_dims(u.dims(), o_prime.len())?;
    check_dims(u.dims(), c_prime.len())?;
    if d_o == 0.0 {
        return Ok(VectorFactors::default());
    }
    let dims = u.dims();
    let top = u.bits - 1;
    let mut low_quality = false;
    let mut clamp = |cos: f64| {
        if cos > 0.0 && cos.is_finite() {
            cos
        } else {
            low_quality = true;
            MIN_COSINE
        }
    };

    let msb_signed = u.values.iter().map(|&v| (v >> top) as f64 - 0.5);
    let (norm_b, cos_b, ip_bc) = code_stats(msb_signed, o_prime, c_prime);
    let cos_b = clamp(cos_b);
    let scale_b = 2.0 * d_o / (norm_b * cos_b);
    let dof = (dims.max(2) - 1) as f64;
    let err = 2.0 * d_o * c_eps as f64 * ((1.0 - cos_b * cos_b).max(0.0) / (cos_b * cos_b * dof)).sqrt();

    let shift = u.shift();
    let full_signed = u.values.iter().map(|&v| v as f64 - shift);
    let (norm_x, cos_x, ip_xc) = code_stats(full_signed, o_prime, c_prime);
    let cos_x = clamp(cos_x);
    let scale_x = 2.0 * d_o / (norm_x * cos_x);

    Ok(VectorFactors {
        short: ShortFactors {
            add: (d_o * d_o + scale_b * ip_bc) as f32,
            scale: scale_b as f32,
            err: err as f32,
        },
        long: LongFactors {
            add: (d_o * d_o + scale_x * ip_xc) as f32,
            scale: scale_x as f32,
        },
        low_quality,
    })
}
