//! Out-of-distribution train/test split and divergence statistics.
//!
//! Per subject/object pair, the rarest predicates (cumulatively at most a
//! fraction of the pair's triplets) form a test list. Images whose positive
//! triplets fall mostly inside that list go to the test split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::vocab::PredicateId;

/// Ordered (subject, object) category pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pub subject: String,
    pub object: String,
}

impl PairKey {
    pub fn new(subject: impl Into<String>, object: impl Into<String>) -> Self {
        PairKey {
            subject: subject.into(),
            object: object.into(),
        }
    }
}

pub type PredicateCounts = BTreeMap<PredicateId, u64>;
pub type PairCounts = BTreeMap<PairKey, PredicateCounts>;
pub type TestList = BTreeSet<(PairKey, PredicateId)>;

pub const KL_EPS: f64 = 1e-7;

/// Positive triplets keyed by pair and effective predicate.
pub fn pair_predicate_counts(dataset: &Dataset) -> PairCounts {
    let mut out = PairCounts::new();
    for (i, s) in dataset.positives() {
        if let Some(p) = dataset.effective_label(i) {
            *out.entry(PairKey::new(s.subject.as_str(), s.object.as_str()))
                .or_default()
                .entry(p)
                .or_insert(0) += 1;
        }
    }
    out
}

/// Rare (pair, predicate) combinations: per pair, predicates in ascending
/// count order (ties by id) are added while the running total stays within
/// `frac` of the pair's total.
pub fn build_test_triplet_list(counts: &PairCounts, frac: f64) -> Result<TestList> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Config(format!("test fraction {frac} outside (0, 1)")));
    }
    let mut out = TestList::new();
    for (pair, preds) in counts {
        let total: u64 = preds.values().sum();
        let budget = frac * total as f64;
        let mut order: Vec<(PredicateId, u64)> = preds.iter().map(|(&p, &c)| (p, c)).collect();
        order.sort_by_key(|&(p, c)| (c, p));
        let mut cum = 0u64;
        for (p, c) in order {
            cum += c;
            if cum as f64 > budget {
                break;
            }
            out.insert((pair.clone(), p));
        }
    }
    Ok(out)
}

/// Image ids of the train and test sides, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageSplit {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

/// Send an image to test when at least `image_frac` of its positive
/// triplets are on the test list.
pub fn split_images(dataset: &Dataset, test_list: &TestList, image_frac: f64) -> Result<ImageSplit> {
    if !(image_frac > 0.0 && image_frac <= 1.0) {
        return Err(Error::Config(format!("image fraction {image_frac} outside (0, 1]")));
    }
    // image -> (listed, total)
    let mut tally: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        let entry = tally.entry(s.image_id).or_insert((0, 0));
        if let Some(p) = dataset.effective_label(i) {
            entry.1 += 1;
            if test_list.contains(&(PairKey::new(s.subject.as_str(), s.object.as_str()), p)) {
                entry.0 += 1;
            }
        }
    }
    let mut split = ImageSplit::default();
    for (image, (listed, total)) in tally {
        if total > 0 && listed as f64 >= image_frac * total as f64 {
            split.test.push(image);
        } else {
            split.train.push(image);
        }
    }
    Ok(split)
}

/// Uniformly random image split with `round(test_frac · images)` test images.
pub fn random_image_split(dataset: &Dataset, test_frac: f64, seed: u64) -> Result<ImageSplit> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::Config(format!("test fraction {test_frac} outside (0, 1)")));
    }
    let images: BTreeSet<u64> = dataset.samples().iter().map(|s| s.image_id).collect();
    let mut images: Vec<u64> = images.into_iter().collect();
    images.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = libm::round(test_frac * images.len() as f64) as usize;
    let mut test = images.split_off(images.len() - n_test);
    images.sort_unstable();
    test.sort_unstable();
    Ok(ImageSplit { train: images, test })
}

/// Materialise both sides of a split.
pub fn apply_split(dataset: &Dataset, split: &ImageSplit) -> (Dataset, Dataset) {
    let test: BTreeSet<u64> = split.test.iter().copied().collect();
    (
        dataset.filter(|s, _| !test.contains(&s.image_id)),
        dataset.filter(|s, _| test.contains(&s.image_id)),
    )
}

/// `KL(p ‖ q)` of two count tables after normalising each, adding `epsilon`
/// to every category of the union support and renormalising.
pub fn kl_divergence(p: &PredicateCounts, q: &PredicateCounts, epsilon: f64) -> Result<f64> {
    let support: BTreeSet<PredicateId> = p.keys().chain(q.keys()).copied().collect();
    if support.is_empty() {
        return Err(Error::Empty("both distributions"));
    }
    let smooth = |c: &PredicateCounts| -> Vec<f64> {
        let total: u64 = c.values().sum();
        let raw: Vec<f64> = support
            .iter()
            .map(|k| {
                let v = c.get(k).copied().unwrap_or(0) as f64;
                (if total > 0 { v / total as f64 } else { 0.0 }) + epsilon
            })
            .collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    let kl: f64 = ps.iter().zip(&qs).map(|(&a, &b)| a * (math::ln(a) - math::ln(b))).sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitStats {
    /// `KL(train ‖ test)` of the global predicate distributions.
    pub kl: f64,
    /// Mean per-pair KL over pairs present in both splits.
    pub kl_mean: Option<f64>,
    pub shared_pairs: usize,
    pub n_train_images: usize,
    pub n_test_images: usize,
    pub n_train_triplets: usize,
    pub n_test_triplets: usize,
}

fn global_counts(pairs: &PairCounts) -> PredicateCounts {
    let mut out = PredicateCounts::new();
    for preds in pairs.values() {
        for (&p, &c) in preds {
            *out.entry(p).or_insert(0) += c;
        }
    }
    out
}

fn image_count(dataset: &Dataset) -> usize {
    dataset
        .samples()
        .iter()
        .map(|s| s.image_id)
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn split_stats(train: &Dataset, test: &Dataset) -> Result<SplitStats> {
    if train.vocabulary().names() != test.vocabulary().names() {
        return Err(Error::Structural("train and test vocabularies differ".into()));
    }
    let (tr, te) = (pair_predicate_counts(train), pair_predicate_counts(test));
    let kl = kl_divergence(&global_counts(&tr), &global_counts(&te), KL_EPS)?;
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (pair, p) in &tr {
        if let Some(q) = te.get(pair) {
            sum += kl_divergence(p, q, KL_EPS)?;
            shared += 1;
        }
    }
    Ok(SplitStats {
        kl,
        kl_mean: (shared > 0).then(|| sum / shared as f64),
        shared_pairs: shared,
        n_train_images: image_count(train),
        n_test_images: image_count(test),
        n_train_triplets: tr.values().flat_map(|m| m.values()).sum::<u64>() as usize,
        n_test_triplets: te.values().flat_map(|m| m.values()).sum::<u64>() as usize,
    })
}

/// Test list, image split and both datasets in one call.
pub fn ood_split(dataset: &Dataset, triplet_frac: f64, image_frac: f64) -> Result<(ImageSplit, Dataset, Dataset)> {
    let list = build_test_triplet_list(&pair_predicate_counts(dataset), triplet_frac)?;
    let split = split_images(dataset, &list, image_frac)?;
    let (train, test) = apply_split(dataset, &split);
    Ok((split, train, test))
}
