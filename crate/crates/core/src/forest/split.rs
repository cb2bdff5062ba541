//! Best Gini split of a node.
//!
//! For a node of `n` samples the weighted Gini impurity of a split is
//! `(n - P) / n` with `P = SL / nL + SR / nR`, where `SL` and `SR` are the sums
//! of squared class counts on each side. Minimizing impurity is maximizing
//! `P`, which we compare exactly as a fraction of integers so that equal
//! splits tie exactly and the tie rule (lower feature, then lower threshold)
//! is deterministic.

use std::cmp::Ordering;

/// Exact `num / den` with `num = SL*nR + SR*nL`, `den = nL*nR`.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn cmp(&self, other: &Purity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted Gini impurity of the two children.
    pub impurity: f64,
    /// Samples routed left (`x[feature] <= threshold`).
    pub n_left: usize,
}

/// Gini impurity `1 - sum p_c^2` of a count vector.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let s: u64 = counts.iter().map(|&c| (c as u64).pow(2)).sum();
    (n * n - s) as f64 / (n * n) as f64
}

/// Midpoint of two consecutive distinct values that still separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + 0.5 * (hi - lo);
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Best impurity-reducing split of `samples` over `features`, if any.
///
/// `columns[f][i]` is feature `f` of point `i`; `samples` may repeat points
/// (bootstrap multiplicity counts). Each child must keep `min_leaf` samples.
pub fn best_split(
    columns: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    samples: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = samples.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mut total = vec![0u64; n_classes];
    for &i in samples {
        total[y[i]] += 1;
    }
    let s_parent: u64 = total.iter().map(|c| c * c).sum();
    // Parent purity S / n as a fraction.
    let parent = Purity { num: s_parent as u128, den: n as u128 };

    let mut best: Option<(Purity, Split)> = None;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0u64; n_classes];
    let mut right = vec![0u64; n_classes];

    for &f in features {
        order.clear();
        order.extend(samples.iter().map(|&i| (columns[f][i], y[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));

        left.fill(0);
        right.copy_from_slice(&total);
        let (mut sl, mut sr) = (0u64, s_parent);
        for k in 0..n - 1 {
            let c = order[k].1;
            sl += 2 * left[c] + 1;
            left[c] += 1;
            sr -= 2 * right[c] - 1;
            right[c] -= 1;

            let (v, next) = (order[k].0, order[k + 1].0);
            let n_left = k + 1;
            let n_right = n - n_left;
            if v == next || n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let p = Purity {
                num: sl as u128 * n_right as u128 + sr as u128 * n_left as u128,
                den: n_left as u128 * n_right as u128,
            };
            let threshold = midpoint(v, next);
            let better = match &best {
                None => true,
                Some((bp, bs)) => match p.cmp(bp) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => (f, threshold) < (bs.feature, bs.threshold),
                },
            };
            if better {
                let impurity = (n as u128 * p.den - p.num) as f64 / (n as u128 * p.den) as f64;
                best = Some((p, Split { feature: f, threshold, impurity, n_left }));
            }
        }
    }
    best.filter(|(p, _)| p.cmp(&parent) == Ordering::Greater).map(|(_, s)| s)
}
