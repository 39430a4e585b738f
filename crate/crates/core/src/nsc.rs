//! Soft-label correction of flagged positives with Gaussian-weighted kNN.
//!
//! A flagged sample looks at the clean positives sharing its subject/object
//! pair, takes the `K` nearest (squared distance), and votes with weights
//! `a·exp(−(d − b)² / 2c²)`. The winning ("raw") predicate and the original
//! predicate share the label mass in proportion to their vote weights.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{Dataset, PartitionTag, Sample, SampleId};
use crate::dist::{Distribution, SoftLabel};
use crate::error::{Error, Result};
use crate::math::{self, clamp_prob, sq_dist, PROB_EPS};
use crate::vocab::PredicateId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WknnConfig {
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for WknnConfig {
    fn default() -> Self {
        WknnConfig {
            k: 3,
            a: 1.0,
            b: 0.0,
            c: 10.0,
        }
    }
}

impl WknnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("knn_a = {} must be > 0", self.a)));
        }
        if self.c == 0.0 || !self.c.is_finite() || !self.b.is_finite() {
            return Err(Error::Config(format!("knn_c = {} must be finite and non-zero", self.c)));
        }
        Ok(())
    }
}

/// `a·exp(−(d − b)² / (2c²))` for a squared distance `d`.
pub fn gaussian_weight(d: f64, config: &WknnConfig) -> f64 {
    let t = d - config.b;
    config.a * math::exp(-(t * t) / (2.0 * config.c * config.c))
}

/// A clean candidate neighbour.
#[derive(Debug, Clone, Copy)]
pub struct PoolMember<'a> {
    pub id: SampleId,
    pub feature: &'a [f64],
    pub label: PredicateId,
}

/// Clean samples sharing the query's subject/object pair.
#[derive(Debug, Clone, Default)]
pub struct NeighborPool<'a> {
    members: Vec<PoolMember<'a>>,
}

impl<'a> NeighborPool<'a> {
    pub fn new(members: Vec<PoolMember<'a>>) -> Self {
        NeighborPool { members }
    }

    pub fn members(&self) -> &[PoolMember<'a>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Copy of the pool without `id`.
    pub fn without(&self, id: SampleId) -> NeighborPool<'a> {
        NeighborPool {
            members: self.members.iter().filter(|m| m.id != id).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: SampleId,
    pub label: PredicateId,
    pub distance: f64,
    pub weight: f64,
}

/// Outcome of the weighted vote.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVote {
    pub raw: PredicateId,
    pub neighbors: Vec<Neighbor>,
    /// Summed weight of the selected neighbours per label.
    pub weight_by_label: BTreeMap<PredicateId, f64>,
}

impl RawVote {
    pub fn weight_of(&self, label: PredicateId) -> f64 {
        self.weight_by_label.get(&label).copied().unwrap_or(0.0)
    }
}

/// Weighted vote of the `K` nearest pool members (all of them when the pool
/// is smaller). Distance ties pick the lower sample id; vote ties pick the
/// lower predicate id.
pub fn wknn_raw_label(query: &[f64], pool: &NeighborPool<'_>, config: &WknnConfig) -> Result<RawVote> {
    if pool.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let mut scored: Vec<(f64, &PoolMember<'_>)> = pool
        .members()
        .iter()
        .map(|m| {
            if m.feature.len() != query.len() {
                return Err(Error::DimensionMismatch {
                    expected: query.len(),
                    found: m.feature.len(),
                });
            }
            Ok((sq_dist(query, m.feature), m))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    scored.truncate(config.k);

    let neighbors: Vec<Neighbor> = scored
        .iter()
        .map(|(d, m)| Neighbor {
            id: m.id,
            label: m.label,
            distance: *d,
            weight: gaussian_weight(*d, config),
        })
        .collect();
    let mut weight_by_label = BTreeMap::new();
    for n in &neighbors {
        *weight_by_label.entry(n.label).or_insert(0.0) += n.weight;
    }
    let mut raw = (neighbors[0].label, f64::NEG_INFINITY);
    for (&label, &w) in &weight_by_label {
        if w > raw.1 {
            raw = (label, w);
        }
    }
    Ok(RawVote {
        raw: raw.0,
        neighbors,
        weight_by_label,
    })
}

/// Normalised scores of the raw and original labels.
pub fn soft_scores(w_raw_sum: f64, w_ori_sum: f64) -> Result<(f64, f64)> {
    if !(w_raw_sum >= 0.0 && w_ori_sum >= 0.0) || !(w_raw_sum + w_ori_sum).is_finite() {
        return Err(Error::InvalidInput(format!("weight sums ({w_raw_sum}, {w_ori_sum})")));
    }
    let total = w_raw_sum + w_ori_sum;
    if total == 0.0 {
        return Err(Error::DegenerateScores);
    }
    Ok((w_raw_sum / total, w_ori_sum / total))
}

/// Soft label `{raw: s_raw, original: s_ori}`; a single hard entry when the
/// two labels coincide or the original carries no weight.
pub fn assemble_soft_label(
    raw: PredicateId,
    original: PredicateId,
    w_raw_sum: f64,
    w_ori_sum: f64,
) -> Result<SoftLabel> {
    if raw == original {
        return Ok(SoftLabel::hard(original));
    }
    let (s_raw, s_ori) = soft_scores(w_raw_sum, w_ori_sum)?;
    if s_ori == 0.0 {
        return Ok(SoftLabel::hard(raw));
    }
    Ok(SoftLabel::pair(raw, s_raw, original, s_ori))
}

/// Audit row for one corrected sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionRecord {
    pub id: SampleId,
    pub original: PredicateId,
    /// `None` when no clean sample shares the pair.
    pub raw: Option<PredicateId>,
    pub s_raw: f64,
    pub s_ori: f64,
}

#[derive(Debug, Clone)]
pub struct NscOutcome {
    pub dataset: Dataset,
    pub records: Vec<CorrectionRecord>,
}

fn pair_key(s: &Sample) -> (&str, &str) {
    (s.subject.as_str(), s.object.as_str())
}

/// Build the pools once: clean positives grouped by subject/object pair.
pub fn clean_pools(dataset: &Dataset) -> BTreeMap<(String, String), NeighborPool<'_>> {
    let mut pools: BTreeMap<(String, String), NeighborPool<'_>> = BTreeMap::new();
    for (s, st) in dataset.iter() {
        if st.tag != PartitionTag::PosClean {
            continue;
        }
        if let Some(label) = s.predicate {
            pools
                .entry((s.subject.clone(), s.object.clone()))
                .or_default()
                .members
                .push(PoolMember {
                    id: s.id,
                    feature: &s.feature,
                    label,
                });
        }
    }
    pools
}

/// Correction decision for one flagged sample, given its pool.
pub fn correct_one(
    sample: &Sample,
    pool: Option<&NeighborPool<'_>>,
    config: &WknnConfig,
) -> Result<(SoftLabel, CorrectionRecord)> {
    let original = sample
        .predicate
        .ok_or_else(|| Error::sample(sample.id, "flagged sample without predicate"))?;
    let keep = |raw| {
        (
            SoftLabel::hard(original),
            CorrectionRecord {
                id: sample.id,
                original,
                raw,
                s_raw: 0.0,
                s_ori: 1.0,
            },
        )
    };
    let pool = match pool {
        Some(p) => p.without(sample.id),
        None => return Ok(keep(None)),
    };
    let vote = match wknn_raw_label(&sample.feature, &pool, config) {
        Ok(v) => v,
        Err(Error::NoNeighbors) => return Ok(keep(None)),
        Err(e) => return Err(e),
    };
    if vote.raw == original {
        return Ok(keep(Some(original)));
    }
    let w_raw = vote.weight_of(vote.raw);
    let w_ori = vote.weight_of(original);
    let (s_raw, s_ori) = match soft_scores(w_raw, w_ori) {
        Ok(s) => s,
        // Every neighbour weight underflowed to zero: nothing to go on.
        Err(Error::DegenerateScores) => return Ok(keep(Some(vote.raw))),
        Err(e) => return Err(e),
    };
    let soft = assemble_soft_label(vote.raw, original, w_raw, w_ori)?;
    Ok((
        soft,
        CorrectionRecord {
            id: sample.id,
            original,
            raw: Some(vote.raw),
            s_raw,
            s_ori,
        },
    ))
}

/// Give every `PosNoisy` sample a soft label and tag it `PosCorrected`.
/// Other samples are left untouched.
pub fn correct(dataset: &Dataset, config: &WknnConfig) -> Result<NscOutcome> {
    config.validate()?;
    let pools = clean_pools(dataset);
    let mut decisions = Vec::new();
    for (i, (s, st)) in dataset.iter().enumerate() {
        if st.tag != PartitionTag::PosNoisy {
            continue;
        }
        let (a, b) = pair_key(s);
        let pool = pools.get(&(String::from(a), String::from(b)));
        decisions.push((i, correct_one(s, pool, config)?));
    }
    drop(pools);
    let mut out = dataset.clone();
    let mut records = Vec::with_capacity(decisions.len());
    for (i, (soft, record)) in decisions {
        out.transition(i, PartitionTag::PosCorrected)?;
        out.state_mut(i).soft = Some(soft);
        records.push(record);
    }
    Ok(NscOutcome { dataset: out, records })
}

/// Binary cross-entropy against a soft label, averaged over all categories.
pub fn soft_bce_loss(pred: &Distribution, soft: &SoftLabel) -> f64 {
    let n = pred.len();
    let target = soft.to_dense(n);
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(&target)
        .map(|(&p, &r)| {
            let p = clamp_prob(p, PROB_EPS);
            r * math::ln(p) + (1.0 - r) * math::ln(1.0 - p)
        })
        .sum();
    -total / n as f64
}
