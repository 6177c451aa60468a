use std::cmp::Ordering;

use super::ip::{ip_msb_exact, scan_bitwise, scan_lut};
use super::{Candidate, QueryRepr, QueryState, SearchParams};
use crate::codec::{excode_at, LongFactors, ShortFactors};
use crate::index::ClusterView;

#[inline]
fn clamp_zero(x: f64) -> f64 {
    // Also maps -0.0 and NaN to +0.0 so thresholds stay ordered as bits.
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// 1-bit estimate and lower bound of `||o_r - q||^2`.
///
/// `ip_binary` is `<msb, q_rot>`, exact or from the quantized query. The
/// bound subtracts the code error term and, for a quantized query,
/// `scale * qs.ip_slack`.
pub fn estimate_stage1(ip_binary: f64, sf: &ShortFactors, qs: &QueryState, d_qc2: f64) -> (f64, f64) {
    let ip_signed = ip_binary - 0.5 * qs.sum_q;
    let est = sf.add as f64 + d_qc2 - sf.scale as f64 * ip_signed;
    let lb = est - sf.err as f64 * d_qc2.sqrt() - sf.scale as f64 * qs.ip_slack;
    (clamp_zero(est), clamp_zero(lb))
}

/// Full-code estimate of `||o_r - q||^2` from `ip_msb = <msb, q_rot>` and the
/// packed ex-code.
pub fn refine_stage2(
    excode: &[u8],
    bits: u8,
    ip_msb: f64,
    lf: &LongFactors,
    qs: &QueryState,
    d_qc2: f64,
) -> f64 {
    assert!(bits >= 2, "refinement needs an ex-code");
    let ip_ex: f64 = qs
        .q_rot
        .iter()
        .enumerate()
        .map(|(i, &q)| excode_at(excode, i, bits) as f64 * q as f64)
        .sum();
    let k_b = ((1u32 << bits) - 1) as f64 / 2.0;
    let high = (1u32 << (bits - 1)) as f64;
    let ip_full = high * ip_msb + ip_ex - k_b * qs.sum_q;
    clamp_zero(lf.add as f64 + d_qc2 - lf.scale as f64 * ip_full)
}

pub(crate) fn cmp_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    a.dist2.total_cmp(&b.dist2).then(a.pid.cmp(&b.pid))
}

/// Keeps the `k` smallest candidates, sorted.
pub(crate) fn keep_best(mut c: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    if c.len() > k {
        c.select_nth_unstable_by(k - 1, cmp_candidates);
        c.truncate(k);
    }
    c.sort_unstable_by(cmp_candidates);
    c
}

/// One scan of a cluster for one query: stage-1 estimates for every member,
/// pruning of members whose lower bound exceeds `threshold`, refinement of
/// the survivors and local top-K selection.
pub fn cluster_local_search(
    qs: &QueryState,
    view: &ClusterView<'_>,
    d_qc2: f64,
    sp: &SearchParams,
    threshold: f32,
) -> Vec<Candidate> {
    let n = view.len;
    if n == 0 {
        return Vec::new();
    }
    let refine = sp.refine && view.bits > 1;
    let threshold = threshold as f64;

    let ip_binary: Vec<f64> = match &qs.repr {
        QueryRepr::Lut(luts) => {
            let mut ip = vec![0.0f32; n];
            scan_lut(view.msb_words, n, luts, &mut ip);
            ip.into_iter().map(f64::from).collect()
        }
        QueryRepr::Bitwise(qq) => {
            let mut ip = vec![0i64; n];
            scan_bitwise(view.msb_words, n, qq, &mut ip);
            let delta = qq.delta() as f64;
            ip.into_iter().map(|v| v as f64 * delta).collect()
        }
    };

    let mut out = Vec::new();
    for (v, &ip) in ip_binary.iter().enumerate() {
        let (est, lb) = estimate_stage1(ip, &view.short_factors[v], qs, d_qc2);
        if lb > threshold {
            continue;
        }
        let dist2 = if refine {
            let ip_msb = match qs.repr {
                QueryRepr::Lut(_) => ip,
                QueryRepr::Bitwise(_) => {
                    let words = (0..view.msb_words.len() / n).map(|g| view.msb_words[g * n + v]);
                    ip_msb_exact(words, &qs.q_rot)
                }
            };
            refine_stage2(view.excode(v), view.bits, ip_msb, &view.long_factors[v], qs, d_qc2)
        } else {
            est
        };
        out.push(Candidate {
            pid: view.pids[v],
            dist2: dist2 as f32,
        });
    }
    keep_best(out, sp.k)
}
