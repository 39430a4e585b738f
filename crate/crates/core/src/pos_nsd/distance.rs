use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sq_dist;

/// Symmetric matrix of squared Euclidean distances with zero diagonal,
/// stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a full square matrix, checking symmetry, zero diagonal and
    /// non-negativity.
    pub fn from_full(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is {}", row[i])));
            }
            for j in i + 1..n {
                let v = row[j];
                if !(v >= 0.0 && v.is_finite()) || v != rows[j][i] {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) breaks symmetry or sign")));
                }
                upper.push(v);
            }
        }
        Ok(DistanceMatrix { n, upper })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            core::cmp::Ordering::Equal => 0.0,
            core::cmp::Ordering::Less => self.upper[self.offset(i, j)],
            core::cmp::Ordering::Greater => self.upper[self.offset(j, i)],
        }
    }

    /// Off-diagonal upper-triangle entries, row by row.
    pub fn pairs(&self) -> &[f64] {
        &self.upper
    }

    pub fn row_max(&self, i: usize) -> f64 {
        (0..self.n).map(|j| self.get(i, j)).fold(0.0, f64::max)
    }

    pub fn to_full(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// `d_ij = ‖h_i − h_j‖²` for every pair.
pub fn pairwise_sq_distances<F: AsRef<[f64]>>(features: &[F]) -> Result<DistanceMatrix> {
    let first = features.first().ok_or(Error::Empty("feature list"))?;
    let dim = first.as_ref().len();
    for f in features {
        if f.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.as_ref().len(),
            });
        }
    }
    let n = features.len();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let a = features[i].as_ref();
        for b in &features[i + 1..] {
            upper.push(sq_dist(a, b.as_ref()));
        }
    }
    Ok(DistanceMatrix { n, upper })
}

/// The distance ranked at `alpha` percent among the `M = N(N−1)/2` pairwise
/// distances sorted ascending, i.e. the entry at 1-based rank
/// `ceil(alpha/100 · M)`.
pub fn cutoff_distance(matrix: &DistanceMatrix, alpha: f64) -> Result<f64> {
    if matrix.len() < 2 {
        return Err(Error::InvalidInput("cutoff distance needs at least two samples".into()));
    }
    if !(alpha > 0.0 && alpha <= 100.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 100]")));
    }
    let m = matrix.pairs().len();
    let rank = (libm::ceil(alpha * m as f64 / 100.0) as usize).clamp(1, m);
    let mut values = matrix.pairs().to_vec();
    let (_, nth, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*nth)
}
