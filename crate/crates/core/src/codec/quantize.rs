//! Two-phase grid search over the rescaling factor `t`.
//!
//! For a fixed `t` the code closest to `t * o'` is obtained by rounding each
//! coordinate onto the shifted integer grid; the search picks the `t` whose
//! code has the largest cosine with `o'`.

use super::{QuantizationParams, UnsignedCode};

/// The search range ends at this multiple of the `t` where the largest
/// coordinate first saturates. At low bit widths the best code clips the
/// largest coordinates, so the optimum lies past saturation.
pub const T_END_FACTOR: f64 = 3.0;

/// Writes the code closest to `t * o` into `out` and returns
/// `(<x, o>, ||x||^2)` for the signed code `x = u - (2^B - 1) / 2`.
#[inline]
pub(crate) fn round_at(t: f64, o: &[f32], bits: u8, out: &mut [u8]) -> (f64, f64) {
    let max_code = ((1u32 << bits) - 1) as f64;
    let shift = max_code / 2.0;
    let mut ip = 0.0;
    let mut norm2 = 0.0;
    for (u, &v) in out.iter_mut().zip(o) {
        let code = (t * v as f64 + shift + 0.5).floor().clamp(0.0, max_code);
        *u = code as u8;
        let x = code - shift;
        ip += x * v as f64;
        norm2 += x * x;
    }
    (ip, norm2)
}

/// Cosine between the signed code of `u` and `o`.
pub fn code_cosine(u: &UnsignedCode, o: &[f32]) -> f64 {
    let shift = u.shift();
    let mut ip = 0.0;
    let mut norm2 = 0.0;
    for (&c, &v) in u.values().iter().zip(o) {
        let x = c as f64 - shift;
        ip += x * v as f64;
        norm2 += x * x;
    }
    if norm2 == 0.0 {
        0.0
    } else {
        ip / norm2.sqrt()
    }
}

fn sample_grid(
    lo: f64,
    hi: f64,
    samples: usize,
    o: &[f32],
    bits: u8,
    scratch: &mut [u8],
    init_t: f64,
) -> (f64, f64) {
    let mut v_max = 0.0;
    let mut t_max = init_t;
    let step = if samples > 1 {
        (hi - lo) / (samples - 1) as f64
    } else {
        0.0
    };
    for i in 0..samples {
        let t = lo + step * i as f64;
        let (ip, norm2) = round_at(t, o, bits, scratch);
        let v = ip / norm2.sqrt();
        if v > v_max {
            v_max = v;
            t_max = t;
        }
    }
    (t_max, v_max)
}

/// Quantizes a rotated unit vector to `params.bits` bits per dimension.
///
/// Returns the code and the rescaling factor it was produced with. A zero
/// vector maps to the all-midpoint code with `t = 0`.
pub fn quantize_vector(o_prime: &[f32], params: &QuantizationParams) -> (UnsignedCode, f64) {
    let bits = params.bits;
    let dims = o_prime.len();
    let max_o = o_prime.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    if max_o == 0.0 {
        return (UnsignedCode::midpoint(dims, bits), 0.0);
    }
    if bits == 1 {
        // The cosine does not depend on t at one bit: the sign code is optimal.
        let values = o_prime.iter().map(|&v| u8::from(v > 0.0)).collect();
        return (UnsignedCode::from_raw(bits, values), 1.0 / max_o);
    }

    let half = (1u32 << (bits - 1)) as f64;
    let t_start = 0.5 / max_o;
    let t_end = T_END_FACTOR * (half - 0.5) / max_o;
    let mut scratch = vec![0u8; dims];

    let (t_center, _) = sample_grid(
        t_start,
        t_end,
        params.n_coarse,
        o_prime,
        bits,
        &mut scratch,
        t_start,
    );
    let delta = (t_end - t_start) / (params.n_coarse - 1) as f64;
    let lo = t_start.max(t_center - delta);
    let hi = t_end.min(t_center + delta);
    let (t_max, _) = sample_grid(lo, hi, params.n_fine, o_prime, bits, &mut scratch, t_center);

    round_at(t_max, o_prime, bits, &mut scratch);
    (UnsignedCode::from_raw(bits, scratch), t_max)
}
