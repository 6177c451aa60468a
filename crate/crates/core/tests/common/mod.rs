#![allow(dead_code)]

use ivf_rabitq::VectorMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f32 {
    Distribution::<f32>::sample(&StandardNormal, rng)
}

pub fn gaussian(rows: usize, dims: usize, seed: u64) -> VectorMatrix {
    let mut r = rng(seed);
    let v = (0..rows * dims).map(|_| normal(&mut r)).collect();
    VectorMatrix::new(rows, dims, v).unwrap()
}

pub fn unit_vector(dims: usize, r: &mut ChaCha8Rng) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| normal(r) as f64).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// Cosine between the signed code `u - (2^B - 1)/2` and `o`.
pub fn signed_cosine(u: &[u8], bits: u8, o: &[f32]) -> f64 {
    let k = ((1u32 << bits) - 1) as f64 / 2.0;
    let (mut ip, mut nx, mut no) = (0.0, 0.0, 0.0);
    for (&ui, &oi) in u.iter().zip(o) {
        let x = ui as f64 - k;
        ip += x * oi as f64;
        nx += x * x;
        no += oi as f64 * oi as f64;
    }
    if nx == 0.0 || no == 0.0 {
        return 0.0;
    }
    ip / (nx * no).sqrt()
}

fn round_code(o: &[f32], t: f64, bits: u8) -> Vec<u8> {
    let max = ((1u32 << bits) - 1) as f64;
    let k = max / 2.0;
    o.iter()
        .map(|&x| (t * x as f64 + k + 0.5).floor().clamp(0.0, max) as u8)
        .collect()
}

/// Best code over every rescaling factor. The rounded code only changes
/// where `t * o_i + k_B + 0.5` crosses an integer, so one `t` inside each
/// interval between consecutive crossings covers all reachable codes.
/// Ties among the reachable codes prefer the larger code norm, then the
/// lexicographically smaller code.
pub fn quantize_oracle(o: &[f32], bits: u8) -> (Vec<u8>, f64) {
    assert!(o.len() <= 64 && (1..=8).contains(&bits), "oracle scale guard");
    let levels = 1u32 << bits;
    let k = (levels - 1) as f64 / 2.0;
    let mut crossings: Vec<f64> = Vec::new();
    for &x in o {
        let x = x as f64;
        if x == 0.0 {
            continue;
        }
        for j in 1..levels {
            let t = (j as f64 - k - 0.5) / x;
            if t > 0.0 {
                crossings.push(t);
            }
        }
    }
    crossings.sort_by(f64::total_cmp);
    crossings.dedup();

    let mut probes: Vec<f64> = Vec::with_capacity(crossings.len() + 1);
    probes.push(crossings.first().map_or(1.0, |&c| c / 2.0));
    for w in crossings.windows(2) {
        probes.push((w[0] + w[1]) / 2.0);
    }
    if let Some(&last) = crossings.last() {
        probes.push(last * 2.0);
    }

    let norm2 = |u: &[u8]| u.iter().map(|&v| (v as f64 - k).powi(2)).sum::<f64>();
    let mut best: Option<(Vec<u8>, f64)> = None;
    for t in probes {
        let u = round_code(o, t, bits);
        let c = signed_cosine(&u, bits, o);
        let better = match &best {
            None => true,
            Some((bu, bc)) => {
                c > *bc || (c == *bc && (norm2(&u), std::cmp::Reverse(&u)) > (norm2(bu), std::cmp::Reverse(bu)))
            }
        };
        if better {
            best = Some((u, c));
        }
    }
    best.unwrap()
}

/// `d_o^2 + ||q - c||^2 - 2 d_o <x, q' - c'> / <x, o'>` computed per
/// dimension, with `x` the signed code and all vectors rotated.
pub fn direct_estimate(u: &[u8], bits: u8, o_rot: &[f32], d_o: f64, q_rot: &[f32], c_rot: &[f32]) -> f64 {
    let k = ((1u32 << bits) - 1) as f64 / 2.0;
    let mut ip_qc = 0.0;
    let mut ip_o = 0.0;
    let mut d_qc2 = 0.0;
    for i in 0..u.len() {
        let x = u[i] as f64 - k;
        let qc = q_rot[i] as f64 - c_rot[i] as f64;
        ip_qc += x * qc;
        ip_o += x * o_rot[i] as f64;
        d_qc2 += qc * qc;
    }
    d_o * d_o + d_qc2 - 2.0 * d_o * ip_qc / ip_o
}

/// Mixture of `clusters` anisotropic Gaussians: each has its own center,
/// overall scale and a decaying per-axis spectrum along a random axis order.
/// Returns `n_base` base rows and `n_query` held-out query rows.
pub fn mixture(n_base: usize, n_query: usize, dims: usize, clusters: usize, seed: u64) -> (VectorMatrix, VectorMatrix) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..dims).map(|_| normal(&mut r)).collect())
        .collect();
    let scales: Vec<f32> = (0..clusters).map(|_| r.gen_range(0.5..2.0)).collect();
    let spectra: Vec<Vec<f32>> = (0..clusters)
        .map(|_| {
            let mut axes: Vec<usize> = (0..dims).collect();
            for i in (1..dims).rev() {
                axes.swap(i, r.gen_range(0..=i));
            }
            let mut s = vec![0.0f32; dims];
            for (rank, &a) in axes.iter().enumerate() {
                s[a] = 1.0 / (1.0 + rank as f32 / 2.0);
            }
            s
        })
        .collect();
    let draw = |rows: usize, r: &mut ChaCha8Rng| {
        let mut v = Vec::with_capacity(rows * dims);
        for _ in 0..rows {
            let c = r.gen_range(0..clusters);
            for d in 0..dims {
                v.push(centers[c][d] + scales[c] * spectra[c][d] * normal(r));
            }
        }
        VectorMatrix::new(rows, dims, v).unwrap()
    };
    let base = draw(n_base, &mut r);
    let queries = draw(n_query, &mut r);
    (base, queries)
}

/// Mean fraction of the true top-`k` ids present in each result.
pub fn recall(results: &[ivf_rabitq::Neighbors], truth: &[ivf_rabitq::Neighbors], k: usize) -> f64 {
    let hits: usize = results
        .iter()
        .zip(truth)
        .map(|(r, t)| {
            let t = &t.ids[..k.min(t.ids.len())];
            r.ids.iter().take(k).filter(|id| t.contains(id)).count()
        })
        .sum();
    hits as f64 / (k * results.len()) as f64
}
