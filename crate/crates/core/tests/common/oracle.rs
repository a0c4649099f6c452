/// Sort, then index by the nearest-rank rule with exact integer arithmetic.
pub fn brute_percentile(values: &[f64], p_num: u64, p_den: u64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as u64;
    let rank = (p_num * n).div_ceil(p_den * 100).max(1);
    v[(rank - 1) as usize]
}

pub fn brute_ecdf_at(values: &[f64], x: f64) -> f64 {
    values.iter().filter(|v| **v <= x).count() as f64 / values.len() as f64
}

/// ECDF from one sorted pass: each distinct value maps to the count of
/// elements not above it.
pub fn sorted_ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        if i + 1 == v.len() || v[i + 1] != *x {
            out.push((*x, (i + 1) as f64 / n));
        }
    }
    out
}
