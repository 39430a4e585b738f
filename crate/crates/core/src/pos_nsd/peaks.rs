use alloc::vec;
use alloc::vec::Vec;

use super::density::{delta_distances, density_order, local_density};
use super::DistanceMatrix;
use crate::error::{Error, Result};

/// Density-peaks clustering.
///
/// Samples are visited in density order (ρ descending, index ascending).
/// Every sample with `ρ ≥ rho_c` and `δ ≥ delta_c` opens a new cluster, ids
/// handed out in visiting order; the rest inherit the cluster of their
/// nearest denser sample.
pub fn density_peaks_cluster(matrix: &DistanceMatrix, d_c: f64, rho_c: f64, delta_c: f64) -> Result<Vec<usize>> {
    if !(rho_c >= 0.0 && delta_c >= 0.0) {
        return Err(Error::Config("density peak thresholds must be >= 0".into()));
    }
    if matrix.is_empty() {
        return Err(Error::NoClusterCenters);
    }
    let rho = local_density(matrix, d_c)?;
    let profile = delta_distances(&rho, matrix)?;
    let order = density_order(&rho);

    let mut cluster: Vec<Option<usize>> = vec![None; matrix.len()];
    let mut next = 0;
    for &i in &order {
        if rho[i] as f64 >= rho_c && profile.delta[i] >= delta_c {
            cluster[i] = Some(next);
            next += 1;
        }
    }
    if next == 0 {
        return Err(Error::NoClusterCenters);
    }
    for &i in &order {
        if cluster[i].is_none() {
            let parent = profile.nearest_denser[i].ok_or(Error::NoClusterCenters)?;
            cluster[i] = cluster[parent];
        }
    }
    Ok(cluster.into_iter().map(|c| c.expect("assigned")).collect())
}
