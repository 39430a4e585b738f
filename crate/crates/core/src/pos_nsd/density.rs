use alloc::vec;
use alloc::vec::Vec;

use super::DistanceMatrix;
use crate::error::{Error, Result};

/// Local density plus the distance to (and identity of) the nearest denser
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub rho: Vec<u32>,
    pub delta: Vec<f64>,
    pub nearest_denser: Vec<Option<usize>>,
}

/// `ρ_i = |{ j ≠ i : d_ij < d_c }|`.
pub fn local_density(matrix: &DistanceMatrix, d_c: f64) -> Result<Vec<u32>> {
    if !(d_c > 0.0) {
        return Err(Error::InvalidInput("cutoff distance must be positive".into()));
    }
    let n = matrix.len();
    let mut rho = vec![0u32; n];
    let mut k = 0;
    let pairs = matrix.pairs();
    for i in 0..n {
        for j in i + 1..n {
            if d_c - pairs[k] > 0.0 {
                rho[i] += 1;
                rho[j] += 1;
            }
            k += 1;
        }
    }
    Ok(rho)
}

/// Sample indices sorted by density descending, ties by ascending index.
pub fn density_order(rho: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].cmp(&rho[a]).then(a.cmp(&b)));
    order
}

/// δ for every sample.
///
/// "Denser" follows the density order of [`density_order`]: a sample tied
/// in ρ but with a smaller index counts as denser. The first sample in that
/// order gets the largest entry of its row and no nearest denser sample;
/// every other sample gets its smallest distance to a denser one (earliest
/// in density order on ties).
pub fn delta_distances(rho: &[u32], matrix: &DistanceMatrix) -> Result<DensityProfile> {
    let n = matrix.len();
    if rho.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho.len(),
        });
    }
    let order = density_order(rho);
    let mut delta = vec![0.0; n];
    let mut nearest = vec![None; n];
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 {
            delta[i] = matrix.row_max(i);
            continue;
        }
        let mut best = (f64::INFINITY, order[0]);
        for &j in &order[..pos] {
            let d = matrix.get(i, j);
            if d < best.0 {
                best = (d, j);
            }
        }
        delta[i] = best.0;
        nearest[i] = Some(best.1);
    }
    Ok(DensityProfile {
        rho: rho.to_vec(),
        delta,
        nearest_denser: nearest,
    })
}
