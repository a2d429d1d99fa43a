//! Exhaustive search over axis-aligned trees of depth at most two.

/// Smallest number of misclassified points over all axis trees of depth
/// `<= depth`, thresholds at midpoints of distinct feature values.
pub fn best_axis_error(x: &[Vec<f64>], y: &[usize], k: usize, depth: usize) -> usize {
    let idx: Vec<usize> = (0..y.len()).collect();
    let p = x.first().map_or(0, |r| r.len());
    let mut cuts = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = x.iter().map(|r| r[j]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        for w in v.windows(2) {
            cuts.push((j, 0.5 * (w[0] + w[1])));
        }
    }
    best(x, y, k, &idx, depth, &cuts)
}

fn leaf_error(y: &[usize], k: usize, idx: &[usize]) -> usize {
    let mut c = vec![0; k];
    for &i in idx {
        c[y[i]] += 1;
    }
    idx.len() - c.into_iter().max().unwrap_or(0)
}

fn best(x: &[Vec<f64>], y: &[usize], k: usize, idx: &[usize], depth: usize, cuts: &[(usize, f64)]) -> usize {
    let mut out = leaf_error(y, k, idx);
    if depth == 0 || out == 0 {
        return out;
    }
    for &(j, t) in cuts {
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][j] < t);
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let e = best(x, y, k, &l, depth - 1, cuts) + best(x, y, k, &r, depth - 1, cuts);
        out = out.min(e);
    }
    out
}
