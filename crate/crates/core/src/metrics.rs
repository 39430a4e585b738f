//! Triplet recall metrics on scored predictions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::vocab::{CategoryGroup, GroupValues, PredicateId, PredicateVocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTriplet {
    pub subject: String,
    pub object: String,
    pub predicate: PredicateId,
    pub score: f64,
}

/// All scored triplets predicted for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredPrediction {
    pub image_id: u64,
    pub triplets: Vec<ScoredTriplet>,
}

type Key<'a> = (&'a str, &'a str, PredicateId);

fn rank(a: &ScoredTriplet, b: &ScoredTriplet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.subject.cmp(&b.subject))
        .then_with(|| a.object.cmp(&b.object))
        .then_with(|| a.predicate.cmp(&b.predicate))
}

/// Top-K keys per image, after merging every prediction for the same image.
fn top_k(preds: &[ScoredPrediction], k: usize) -> Result<BTreeMap<u64, BTreeSet<Key<'_>>>> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let mut by_image: BTreeMap<u64, Vec<&ScoredTriplet>> = BTreeMap::new();
    for p in preds {
        for t in &p.triplets {
            if !t.score.is_finite() {
                return Err(Error::NonFinite(alloc::format!("score for image {}", p.image_id)));
            }
            by_image.entry(p.image_id).or_default().push(t);
        }
    }
    Ok(by_image
        .into_iter()
        .map(|(img, mut ts)| {
            ts.sort_by(|a, b| rank(a, b));
            let keys = ts
                .into_iter()
                .take(k)
                .map(|t| (t.subject.as_str(), t.object.as_str(), t.predicate))
                .collect();
            (img, keys)
        })
        .collect())
}

/// Ground-truth positive triplets grouped by image.
fn ground_truth(gt: &Dataset) -> BTreeMap<u64, Vec<Key<'_>>> {
    let mut out: BTreeMap<u64, Vec<Key<'_>>> = BTreeMap::new();
    for (i, s) in gt.positives() {
        if let Some(p) = gt.effective_label(i) {
            out.entry(s.image_id)
                .or_default()
                .push((s.subject.as_str(), s.object.as_str(), p));
        }
    }
    out
}

struct Tally {
    image_recall: Vec<f64>,
    per_predicate: BTreeMap<PredicateId, (u64, u64)>,
}

fn tally(preds: &[ScoredPrediction], gt: &Dataset, k: usize) -> Result<Tally> {
    let top = top_k(preds, k)?;
    let truth = ground_truth(gt);
    if truth.is_empty() {
        return Err(Error::Empty("ground-truth triplets"));
    }
    let empty = BTreeSet::new();
    let mut t = Tally {
        image_recall: Vec::with_capacity(truth.len()),
        per_predicate: BTreeMap::new(),
    };
    for (img, triplets) in &truth {
        let hits = top.get(img).unwrap_or(&empty);
        let mut n_hit = 0u64;
        for key in triplets {
            let hit = hits.contains(key);
            n_hit += hit as u64;
            let e = t.per_predicate.entry(key.2).or_insert((0, 0));
            e.0 += hit as u64;
            e.1 += 1;
        }
        t.image_recall.push(n_hit as f64 / triplets.len() as f64);
    }
    Ok(t)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Mean over images with ground truth of the fraction of their triplets
/// found among the image's top-K predictions.
pub fn recall_at_k(preds: &[ScoredPrediction], gt: &Dataset, k: usize) -> Result<f64> {
    Ok(mean(tally(preds, gt, k)?.image_recall.into_iter()))
}

/// Recall of each predicate pooled over images.
pub fn per_predicate_recall(preds: &[ScoredPrediction], gt: &Dataset, k: usize) -> Result<BTreeMap<PredicateId, f64>> {
    Ok(tally(preds, gt, k)?
        .per_predicate
        .into_iter()
        .map(|(p, (h, n))| (p, h as f64 / n as f64))
        .collect())
}

/// Per-predicate recall averaged over predicates with ground truth.
pub fn mean_recall_at_k(preds: &[ScoredPrediction], gt: &Dataset, k: usize) -> Result<f64> {
    Ok(mean(per_predicate_recall(preds, gt, k)?.into_values()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub r_at: BTreeMap<usize, f64>,
    pub mr_at: BTreeMap<usize, f64>,
    /// Average of every R@K and mR@K value.
    pub mean: f64,
    /// Per-predicate recall at the largest K.
    pub per_predicate_recall: BTreeMap<PredicateId, f64>,
    /// Mean per-predicate recall within each group at the largest K, if
    /// the group has ground truth.
    pub group_mean_recall: GroupValues<Option<f64>>,
}

pub const DEFAULT_KS: [usize; 2] = [50, 100];

pub fn evaluate(
    preds: &[ScoredPrediction],
    gt: &Dataset,
    ks: &[usize],
    vocab: &PredicateVocabulary,
) -> Result<MetricReport> {
    let k_max = *ks.iter().max().ok_or(Error::Empty("K list"))?;
    let mut r_at = BTreeMap::new();
    let mut mr_at = BTreeMap::new();
    let mut last = BTreeMap::new();
    for &k in ks {
        let t = tally(preds, gt, k)?;
        r_at.insert(k, mean(t.image_recall.iter().copied()));
        let per: BTreeMap<PredicateId, f64> = t
            .per_predicate
            .iter()
            .map(|(&p, &(h, n))| (p, h as f64 / n as f64))
            .collect();
        mr_at.insert(k, mean(per.values().copied()));
        if k == k_max {
            last = per;
        }
    }
    let group = |g: CategoryGroup| {
        let v: Vec<f64> = last
            .iter()
            .filter(|(&p, _)| p < vocab.len() && vocab.group(p) == g)
            .map(|(_, &r)| r)
            .collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    };
    Ok(MetricReport {
        mean: mean(r_at.values().chain(mr_at.values()).copied()),
        group_mean_recall: GroupValues::new(
            group(CategoryGroup::Head),
            group(CategoryGroup::Body),
            group(CategoryGroup::Tail),
        ),
        r_at,
        mr_at,
        per_predicate_recall: last,
    })
}
