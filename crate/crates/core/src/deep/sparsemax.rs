//! Sparsemax: Euclidean projection onto the probability simplex.

/// Projects `z` onto the simplex, writing into `out`.
///
/// Sort-based: with `z` sorted descending, the support size `k` is the
/// largest index with `1 + k·z₍ₖ₎ > Σ_{i≤k} z₍ᵢ₎`, and the threshold is
/// `τ = (Σ_{i≤k} z₍ᵢ₎ − 1) / k`.
pub fn sparsemax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    if z.is_empty() {
        return;
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = sorted[0];
    let mut k = 1;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let kk = (i + 1) as f64;
        if 1.0 + kk * v > cumsum {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / k as f64;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - tau).max(0.0);
    }
}

pub fn sparsemax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    sparsemax_into(z, &mut out);
    out
}
