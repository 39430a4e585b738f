//! Noisy-positive detection by local density.
//!
//! Inside each predicate category the pairwise squared distances define a
//! cutoff at a group-dependent percentile; a sample's local density is the
//! number of same-category samples closer than the cutoff. The densities
//! are split into subsets with 1-D k-means and the lowest-density subset is
//! flagged noisy. Density-peaks clustering over the same quantities is
//! available for diagnostics.

mod density;
mod distance;
mod kmeans;
mod peaks;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

pub use density::{delta_distances, density_order, local_density, DensityProfile};
pub use distance::{cutoff_distance, pairwise_sq_distances, DistanceMatrix};
pub use kmeans::{kmeans_1d, KMeans1d};
pub use peaks::density_peaks_cluster;

use crate::dataset::{Dataset, PartitionTag, Polarity, SampleId};
use crate::error::{Error, Result};
use crate::vocab::{GroupValues, PredicateId};

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffConfig {
    /// Percentile (in percent) of the pairwise distances used as cutoff,
    /// per group of the category.
    pub alpha: GroupValues<f64>,
    pub n_subsets: usize,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        CutoffConfig {
            alpha: GroupValues::new(12.5, 25.0, 50.0),
            n_subsets: 4,
        }
    }
}

impl CutoffConfig {
    pub fn validate(&self) -> Result<()> {
        for (g, a) in self.alpha.iter() {
            if !(a > 0.0 && a <= 100.0) {
                return Err(Error::Config(format!("alpha_{} = {a} outside (0, 100]", g.as_str())));
            }
        }
        if self.n_subsets < 2 {
            return Err(Error::Config(format!("n_subsets = {} must be >= 2", self.n_subsets)));
        }
        Ok(())
    }
}

/// Positives of one predicate category, ordered by sample id.
#[derive(Debug, Clone)]
pub struct CategoryJob<'a> {
    pub predicate: PredicateId,
    pub alpha: f64,
    pub rows: Vec<usize>,
    pub ids: Vec<SampleId>,
    pub features: Vec<&'a [f64]>,
}

/// Per-category result, aligned with the job's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryOutcome {
    pub predicate: PredicateId,
    pub rows: Vec<usize>,
    pub ids: Vec<SampleId>,
    pub cutoff: Option<f64>,
    pub rho: Vec<u32>,
    pub delta: Option<Vec<f64>>,
    /// k-means subset per sample (0 = lowest density).
    pub subset: Vec<usize>,
    pub noisy: Vec<bool>,
}

/// Group the detectable positives by predicate. Positives must still be
/// `PosOriginal` or `NegNoisy`.
pub fn plan<'a>(dataset: &'a Dataset, config: &CutoffConfig) -> Result<Vec<CategoryJob<'a>>> {
    config.validate()?;
    let vocab = dataset.vocabulary();
    let mut by_predicate: BTreeMap<PredicateId, Vec<usize>> = BTreeMap::new();
    for (i, (s, st)) in dataset.iter().enumerate() {
        if s.polarity != Polarity::Positive {
            continue;
        }
        if !matches!(st.tag, PartitionTag::PosOriginal | PartitionTag::NegNoisy) {
            return Err(Error::Transition {
                id: s.id,
                from: st.tag,
                to: PartitionTag::PosClean,
            });
        }
        let k = s
            .predicate
            .ok_or_else(|| Error::sample(s.id, "positive sample without predicate"))?;
        by_predicate.entry(k).or_default().push(i);
    }
    Ok(by_predicate
        .into_iter()
        .map(|(predicate, mut rows)| {
            rows.sort_by_key(|&i| dataset.samples()[i].id);
            CategoryJob {
                predicate,
                alpha: config.alpha.get(vocab.group(predicate)),
                ids: rows.iter().map(|&i| dataset.samples()[i].id).collect(),
                features: rows.iter().map(|&i| dataset.samples()[i].feature.as_slice()).collect(),
                rows,
            }
        })
        .collect())
}

/// Density ranking and subset division for one category. Categories with
/// fewer than `n_subsets` samples, a zero cutoff, or a single density level
/// are left entirely clean.
pub fn process_category(job: &CategoryJob<'_>, n_subsets: usize, with_delta: bool) -> Result<CategoryOutcome> {
    let n = job.rows.len();
    let mut out = CategoryOutcome {
        predicate: job.predicate,
        rows: job.rows.clone(),
        ids: job.ids.clone(),
        cutoff: None,
        rho: alloc::vec![0; n],
        delta: None,
        subset: alloc::vec![0; n],
        noisy: alloc::vec![false; n],
    };
    if n < n_subsets || n < 2 {
        return Ok(out);
    }
    let matrix = pairwise_sq_distances(&job.features)?;
    let d_c = cutoff_distance(&matrix, job.alpha)?;
    out.cutoff = Some(d_c);
    if d_c <= 0.0 {
        log::warn!("predicate {}: zero cutoff distance, category left clean", job.predicate);
        return Ok(out);
    }
    out.rho = local_density(&matrix, d_c)?;
    if with_delta {
        out.delta = Some(delta_distances(&out.rho, &matrix)?.delta);
    }
    let values: Vec<f64> = out.rho.iter().map(|&r| r as f64).collect();
    let km = kmeans_1d(&values, n_subsets)?;
    out.subset = km.assignment;
    if km.centers.len() >= 2 {
        out.noisy = out.subset.iter().map(|&c| c == 0).collect();
    }
    Ok(out)
}

/// Tag every positive `PosNoisy` or `PosClean` from the category outcomes.
pub fn apply(dataset: &Dataset, outcomes: &[CategoryOutcome]) -> Result<Dataset> {
    let mut out = dataset.clone();
    for o in outcomes {
        for (&row, &noisy) in o.rows.iter().zip(&o.noisy) {
            let to = if noisy {
                PartitionTag::PosNoisy
            } else {
                PartitionTag::PosClean
            };
            out.transition(row, to)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PosNsdOutcome {
    pub dataset: Dataset,
    pub categories: Vec<CategoryOutcome>,
}

/// Sequential detection over all predicate categories.
pub fn detect_noisy_positives(dataset: &Dataset, config: &CutoffConfig) -> Result<PosNsdOutcome> {
    let jobs = plan(dataset, config)?;
    let categories = jobs
        .iter()
        .map(|j| process_category(j, config.n_subsets, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosNsdOutcome {
        dataset: apply(dataset, &categories)?,
        categories,
    })
}
