use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Result of [`kmeans_1d`]. Cluster ids are ordered by ascending center, so
/// cluster 0 holds the smallest values.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    pub assignment: Vec<usize>,
    pub centers: Vec<f64>,
    /// Requested clusters that could not be filled (fewer distinct values
    /// than `k`).
    pub dropped: usize,
}

impl KMeans1d {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    /// Within-cluster sum of squared deviations.
    pub fn objective(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.assignment)
            .map(|(&x, &c)| (x - self.centers[c]) * (x - self.centers[c]))
            .sum()
    }
}

/// Prefix sums over the weighted distinct values, shifted by their mean.
struct Prefix {
    w: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
}

impl Prefix {
    fn new(xs: &[f64], ws: &[f64]) -> Self {
        let total: f64 = ws.iter().sum();
        let shift = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / total;
        let m = xs.len();
        let (mut w, mut s, mut q) = (vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]);
        for i in 0..m {
            let x = xs[i] - shift;
            w[i + 1] = w[i] + ws[i];
            s[i + 1] = s[i] + ws[i] * x;
            q[i + 1] = q[i] + ws[i] * x * x;
        }
        Prefix { w, s, q }
    }

    /// Sum of squared deviations of distinct values `a..=b` from their mean.
    #[inline]
    fn cost(&self, a: usize, b: usize) -> f64 {
        let w = self.w[b + 1] - self.w[a];
        let s = self.s[b + 1] - self.s[a];
        let q = self.q[b + 1] - self.q[a];
        (q - s * s / w).max(0.0)
    }
}

/// Fill `cur[lo..=hi]` for one layer of the partition DP using the
/// monotonicity of optimal split points (divide and conquer).
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    prefix: &Prefix,
    prev: &[f64],
    cur: &mut [f64],
    split: &mut [usize],
    layer: usize,
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo.max(layer));
    for j in opt_lo.max(layer)..=opt_hi.min(mid) {
        let v = prev[j - 1] + prefix.cost(j, mid);
        if v < best.0 {
            best = (v, j);
        }
    }
    cur[mid] = best.0;
    split[mid] = best.1;
    if mid > lo {
        fill_layer(prefix, prev, cur, split, layer, lo, mid - 1, opt_lo, best.1);
    }
    fill_layer(prefix, prev, cur, split, layer, mid + 1, hi, best.1, opt_hi);
}

/// Optimal contiguous partition of the weighted sorted values into `k`
/// segments; returns the first index of every segment.
fn optimal_segments(xs: &[f64], ws: &[f64], k: usize) -> Vec<usize> {
    let m = xs.len();
    let prefix = Prefix::new(xs, ws);
    let mut prev: Vec<f64> = (0..m).map(|i| prefix.cost(0, i)).collect();
    let mut splits: Vec<Vec<usize>> = Vec::with_capacity(k);
    splits.push(vec![0; m]);
    for layer in 1..k {
        let mut cur = vec![f64::INFINITY; m];
        let mut split = vec![0; m];
        fill_layer(&prefix, &prev, &mut cur, &mut split, layer, layer, m - 1, layer, m - 1);
        prev = cur;
        splits.push(split);
    }
    let mut starts = vec![0; k];
    let mut end = m - 1;
    for layer in (1..k).rev() {
        let j = splits[layer][end];
        starts[layer] = j;
        end = j - 1;
    }
    starts
}

/// 1-D k-means on `values`.
///
/// Equal values always share a cluster. The partition is initialised at
/// the exact optimum of the 1-D problem (dynamic programming over the
/// sorted distinct values) and then refined with Lloyd iterations until
/// assignments stop changing; points equidistant from two centers go to the
/// lower one. When fewer than `k` distinct values exist the surplus clusters
/// are dropped and reported in [`KMeans1d::dropped`].
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<KMeans1d> {
    if k < 2 {
        return Err(Error::Config(alloc::format!("k-means needs k >= 2, got {k}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    if values.is_empty() {
        return Ok(KMeans1d {
            assignment: Vec::new(),
            centers: Vec::new(),
            dropped: k,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &v in &sorted {
        if xs.last() == Some(&v) {
            *ws.last_mut().unwrap() += 1.0;
        } else {
            xs.push(v);
            ws.push(1.0);
        }
    }
    let k_eff = k.min(xs.len());
    let dropped = k - k_eff;
    if dropped > 0 {
        log::warn!(
            "k-means: {} distinct values for k = {k}, dropping {dropped} empty clusters",
            xs.len()
        );
    }

    let starts = optimal_segments(&xs, &ws, k_eff);
    let mut label = vec![0usize; xs.len()];
    for (c, &s) in starts.iter().enumerate() {
        for l in &mut label[s..] {
            *l = c;
        }
    }
    let mut centers = weighted_means(&xs, &ws, &label, k_eff);

    // Lloyd refinement on the distinct values.
    for _ in 0..1000 {
        let next: Vec<usize> = xs.iter().map(|&x| nearest_center(x, &centers)).collect();
        if next == label {
            break;
        }
        label = next;
        let (kept, relabel) = compact(&label, centers.len());
        if kept < centers.len() {
            label.iter_mut().for_each(|l| *l = relabel[*l]);
        }
        centers = weighted_means(&xs, &ws, &label, kept);
    }

    let assignment = values
        .iter()
        .map(|v| {
            let idx = xs.binary_search_by(|x| x.total_cmp(v)).expect("value present");
            label[idx]
        })
        .collect();
    let dropped = k - centers.len();
    Ok(KMeans1d {
        assignment,
        centers,
        dropped,
    })
}

fn nearest_center(x: f64, centers: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, &m) in centers.iter().enumerate() {
        let d = (x - m).abs();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

fn weighted_means(xs: &[f64], ws: &[f64], label: &[usize], k: usize) -> Vec<f64> {
    let mut sum = vec![0.0; k];
    let mut weight = vec![0.0; k];
    for ((&x, &w), &l) in xs.iter().zip(ws).zip(label) {
        sum[l] += w * x;
        weight[l] += w;
    }
    sum.iter().zip(&weight).map(|(s, w)| s / w).collect()
}

/// Renumber non-empty clusters densely, keeping their order.
fn compact(label: &[usize], k: usize) -> (usize, Vec<usize>) {
    let mut used = vec![false; k];
    for &l in label {
        used[l] = true;
    }
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for (c, &u) in used.iter().enumerate() {
        if u {
            relabel[c] = next;
            next += 1;
        }
    }
    (next, relabel)
}
