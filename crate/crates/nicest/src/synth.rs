//! Synthetic relation-triplet corpora with planted label noise.
//!
//! Every predicate owns a Gaussian cluster in feature space. Labels are then
//! corrupted in three ways: replaced by a coarser predicate, replaced by a
//! random member of the predicate's synonym set, or dropped altogether (the
//! sample is emitted as a negative). A ledger records the truth.

use std::collections::{BTreeMap, BTreeSet};

use nicest_core::{
    Dataset, GroupThresholds, PartitionTag, Polarity, PredicateId, PredicateVocabulary, Sample, SampleId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CENTER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_predicates: usize,
    pub dim: usize,
    pub samples_per_predicate: Vec<usize>,
    pub center_separation: f64,
    pub noise_sigma: f64,
    pub common_prone_rate: f64,
    pub synonym_random_rate: f64,
    pub missing_rate: f64,
    pub synonym_sets: Vec<Vec<PredicateId>>,
    pub coarse_map: BTreeMap<PredicateId, PredicateId>,
    pub seed: u64,
    /// Unrelated subject/object pairs emitted as negatives.
    pub n_background: usize,
    /// Size of the object-category alphabet; pairs are drawn uniformly.
    pub n_objects: usize,
    pub max_triplets_per_image: usize,
    pub head_min: u64,
    pub tail_max: u64,
    /// Defaults to `p0`, `p1`, ...
    pub predicate_names: Option<Vec<String>>,
}

/// `n` counts decaying by `ratio` from `first`.
pub fn geometric_counts(n: usize, first: usize, ratio: f64) -> Vec<usize> {
    (0..n)
        .map(|k| ((first as f64) * ratio.powi(k as i32)).round().max(1.0) as usize)
        .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_predicates: 6,
            dim: 16,
            samples_per_predicate: geometric_counts(6, 4200, 0.6),
            center_separation: 8.0,
            noise_sigma: 1.0,
            common_prone_rate: 0.0,
            synonym_random_rate: 0.0,
            missing_rate: 0.0,
            synonym_sets: Vec::new(),
            coarse_map: BTreeMap::new(),
            seed: 0,
            n_background: 1000,
            n_objects: 6,
            max_triplets_per_image: 4,
            head_min: 2000,
            tail_max: 800,
            predicate_names: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_predicates == 0 || self.dim == 0 {
            return bad("n_predicates and dim must be positive".into());
        }
        if self.samples_per_predicate.len() != self.n_predicates {
            return bad(format!(
                "samples_per_predicate has {} entries for {} predicates",
                self.samples_per_predicate.len(),
                self.n_predicates
            ));
        }
        if !(self.center_separation > 0.0 && self.center_separation.is_finite()) {
            return bad(format!(
                "center_separation = {} must be positive",
                self.center_separation
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {} must be non-negative", self.noise_sigma));
        }
        let rates = [
            ("common_prone_rate", self.common_prone_rate),
            ("synonym_random_rate", self.synonym_random_rate),
            ("missing_rate", self.missing_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1]"));
            }
        }
        if rates.iter().map(|r| r.1).sum::<f64>() > 1.0 + 1e-12 {
            return bad("corruption rates sum above 1".into());
        }
        let mut seen = BTreeSet::new();
        for set in &self.synonym_sets {
            for &p in set {
                if p >= self.n_predicates || !seen.insert(p) {
                    return bad(format!(
                        "synonym sets must be disjoint predicate ids, got {p} twice or out of range"
                    ));
                }
            }
        }
        for (&fine, &coarse) in &self.coarse_map {
            if fine >= self.n_predicates || coarse >= self.n_predicates || fine == coarse {
                return bad(format!("coarse_map entry {fine} -> {coarse} is invalid"));
            }
        }
        if self.n_objects == 0 || self.max_triplets_per_image == 0 {
            return bad("n_objects and max_triplets_per_image must be positive".into());
        }
        GroupThresholds {
            head_min: self.head_min,
            tail_max: self.tail_max,
        }
        .validate()?;
        if let Some(names) = &self.predicate_names {
            if names.len() != self.n_predicates {
                return bad("predicate_names length differs from n_predicates".into());
            }
        }
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.predicate_names
            .clone()
            .unwrap_or_else(|| (0..self.n_predicates).map(|k| format!("p{k}")).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    None,
    CommonProne,
    SynonymRandom,
    Missing,
}

impl Corruption {
    pub fn as_str(self) -> &'static str {
        match self {
            Corruption::None => "none",
            Corruption::CommonProne => "common_prone",
            Corruption::SynonymRandom => "synonym_random",
            Corruption::Missing => "missing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Corruption::None,
            Corruption::CommonProne,
            Corruption::SynonymRandom,
            Corruption::Missing,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    /// Label replaced by another predicate.
    pub fn is_flip(self) -> bool {
        matches!(self, Corruption::CommonProne | Corruption::SynonymRandom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub id: SampleId,
    /// `None` for background negatives.
    pub true_predicate: Option<PredicateId>,
    pub corruption: Corruption,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NoiseLedger {
    pub entries: Vec<LedgerEntry>,
}

impl NoiseLedger {
    pub fn by_id(&self) -> BTreeMap<SampleId, LedgerEntry> {
        self.entries.iter().map(|e| (e.id, *e)).collect()
    }

    pub fn count(&self, c: Corruption) -> usize {
        self.entries.iter().filter(|e| e.corruption == c).count()
    }
}

struct Record {
    truth: Option<PredicateId>,
    label: Option<PredicateId>,
    corruption: Corruption,
    feature: Vec<f64>,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn sample_centers(cfg: &SynthConfig, half_width: f64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let min_sq = cfg.center_separation * cfg.center_separation;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_predicates);
    for k in 0..cfg.n_predicates {
        let mut placed = false;
        for _ in 0..MAX_CENTER_ATTEMPTS {
            let c: Vec<f64> = (0..cfg.dim)
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect();
            let ok = centers
                .iter()
                .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sq);
            if ok {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place center {k} at separation {} after {MAX_CENTER_ATTEMPTS} attempts",
                cfg.center_separation
            )));
        }
    }
    Ok(centers)
}

fn corrupt(
    cfg: &SynthConfig,
    k: PredicateId,
    synonyms: &[PredicateId],
    rng: &mut ChaCha8Rng,
) -> (Option<PredicateId>, Corruption) {
    let u: f64 = rng.random();
    let mut edge = cfg.missing_rate;
    if u < edge {
        return (None, Corruption::Missing);
    }
    edge += cfg.common_prone_rate;
    if u < edge {
        return match cfg.coarse_map.get(&k) {
            Some(&c) => (Some(c), Corruption::CommonProne),
            None => (Some(k), Corruption::None),
        };
    }
    edge += cfg.synonym_random_rate;
    if u < edge && synonyms.len() > 1 {
        let others: Vec<PredicateId> = synonyms.iter().copied().filter(|&s| s != k).collect();
        return (
            Some(others[rng.random_range(0..others.len())]),
            Corruption::SynonymRandom,
        );
    }
    (Some(k), Corruption::None)
}

/// Deterministic corpus and ledger for `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, NoiseLedger)> {
    cfg.validate()?;
    let half_width = cfg.center_separation * (cfg.n_predicates as f64).powf(1.0 / cfg.dim as f64).max(1.0);
    let centers = sample_centers(cfg, half_width)?;
    let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;

    let mut records = Vec::new();
    for (k, center) in centers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ k as u64);
        let synonyms = cfg
            .synonym_sets
            .iter()
            .find(|s| s.contains(&k))
            .map_or(&[][..], |s| s.as_slice());
        for _ in 0..cfg.samples_per_predicate[k] {
            let feature = center.iter().map(|&c| round_f32(c + normal.sample(&mut rng))).collect();
            let (label, corruption) = corrupt(cfg, k, synonyms, &mut rng);
            records.push(Record {
                truth: Some(k),
                label,
                corruption,
                feature,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ cfg.n_predicates as u64);
    let wide = 1.5 * half_width;
    for _ in 0..cfg.n_background {
        records.push(Record {
            truth: None,
            label: None,
            corruption: Corruption::None,
            feature: (0..cfg.dim)
                .map(|_| round_f32(rng.random_range(-wide..=wide)))
                .collect(),
        });
    }

    let mut layout = ChaCha8Rng::seed_from_u64(cfg.seed);
    layout.set_stream(1);
    records.shuffle(&mut layout);
    let mut counts = vec![0u64; cfg.n_predicates];
    let mut samples = Vec::with_capacity(records.len());
    let mut ledger = NoiseLedger::default();
    let (mut image, mut left_in_image) = (0u64, layout.random_range(1..=cfg.max_triplets_per_image));
    for (id, r) in records.into_iter().enumerate() {
        if left_in_image == 0 {
            image += 1;
            left_in_image = layout.random_range(1..=cfg.max_triplets_per_image);
        }
        left_in_image -= 1;
        let subject = layout.random_range(0..cfg.n_objects);
        let mut object = layout.random_range(0..cfg.n_objects);
        if cfg.n_objects > 1 {
            while object == subject {
                object = layout.random_range(0..cfg.n_objects);
            }
        }
        if let Some(p) = r.label {
            counts[p] += 1;
        }
        samples.push(Sample {
            id: id as u64,
            image_id: image,
            subject: format!("o{subject}"),
            object: format!("o{object}"),
            predicate: r.label,
            feature: r.feature,
            polarity: if r.label.is_some() {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        });
        ledger.entries.push(LedgerEntry {
            id: id as u64,
            true_predicate: r.truth,
            corruption: r.corruption,
        });
    }
    let thresholds = GroupThresholds {
        head_min: cfg.head_min,
        tail_max: cfg.tail_max,
    };
    let vocab = PredicateVocabulary::new(cfg.names(), counts, thresholds)?;
    Ok((Dataset::new(vocab, samples)?, ledger))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub id: u64,
    #[serde(rename = "true")]
    pub truth: Option<String>,
    pub corruption: String,
}

impl NoiseLedger {
    pub fn to_lines(&self, vocab: &PredicateVocabulary) -> Vec<LedgerLine> {
        self.entries
            .iter()
            .map(|e| LedgerLine {
                id: e.id,
                truth: e.true_predicate.map(|p| vocab.names()[p].clone()),
                corruption: e.corruption.as_str().to_string(),
            })
            .collect()
    }

    pub fn from_lines(lines: Vec<LedgerLine>, vocab: &PredicateVocabulary) -> Result<Self> {
        let entries = lines
            .into_iter()
            .map(|l| {
                let true_predicate = match &l.truth {
                    None => None,
                    Some(n) => Some(
                        vocab
                            .index_of(n)
                            .ok_or_else(|| Error::Config(format!("ledger predicate {n:?} not in vocabulary")))?,
                    ),
                };
                let corruption = Corruption::parse(&l.corruption)
                    .ok_or_else(|| Error::Config(format!("unknown corruption {:?}", l.corruption)))?;
                Ok(LedgerEntry {
                    id: l.id,
                    true_predicate,
                    corruption,
                })
            })
            .collect::<Result<_>>()?;
        Ok(NoiseLedger { entries })
    }
}

/// How much of the planted noise a processed dataset recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RecoveryReport {
    /// Annotated positives whose label was replaced.
    pub planted_flips: usize,
    /// Annotated positives tagged noisy or corrected.
    pub flagged: usize,
    pub flagged_flips: usize,
    pub detection_recall: Option<f64>,
    pub detection_precision: Option<f64>,
    pub clean_positives: usize,
    pub flagged_clean: usize,
    pub flagged_clean_rate: Option<f64>,
    /// Flagged flips whose final label is the truth.
    pub corrected_to_truth: usize,
    pub correction_accuracy: Option<f64>,
    /// Annotated positives whose final label differs from the annotation.
    pub altered_labels: usize,
    pub planted_missing: usize,
    pub missing_recovered: usize,
    pub missing_recall: Option<f64>,
    pub planted_missing_tail: usize,
    pub missing_tail_recovered: usize,
    pub missing_tail_recall: Option<f64>,
    /// Background negatives that received a pseudo label.
    pub mined_background: usize,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Compare a processed dataset with the ledger of the corpus it came from.
/// Every sample must appear in the ledger; ledger rows for samples not in
/// the dataset (for example the held-out split) are ignored.
pub fn plant_report(ledger: &NoiseLedger, dataset: &Dataset) -> Result<RecoveryReport> {
    let truth = ledger.by_id();
    let vocab = dataset.vocabulary();
    let mut r = RecoveryReport::default();
    for (i, (s, st)) in dataset.iter().enumerate() {
        let e = truth
            .get(&s.id)
            .ok_or_else(|| Error::Config(format!("sample {} missing from the ledger", s.id)))?;
        let label = dataset.effective_label(i);
        if st.mined {
            match e.true_predicate {
                None => r.mined_background += 1,
                Some(t) if e.corruption == Corruption::Missing && s.predicate == Some(t) => {
                    r.missing_recovered += 1;
                    if vocab.group(t) == nicest_core::CategoryGroup::Tail {
                        r.missing_tail_recovered += 1;
                    }
                }
                _ => {}
            }
        }
        if e.corruption == Corruption::Missing {
            r.planted_missing += 1;
            if e.true_predicate
                .is_some_and(|t| vocab.group(t) == nicest_core::CategoryGroup::Tail)
            {
                r.planted_missing_tail += 1;
            }
            continue;
        }
        if s.polarity != Polarity::Positive || st.mined {
            continue;
        }
        let flagged = matches!(st.tag, PartitionTag::PosNoisy | PartitionTag::PosCorrected);
        r.flagged += flagged as usize;
        if label != s.predicate {
            r.altered_labels += 1;
        }
        if e.corruption.is_flip() {
            r.planted_flips += 1;
            if flagged {
                r.flagged_flips += 1;
                if label == e.true_predicate {
                    r.corrected_to_truth += 1;
                }
            }
        } else {
            r.clean_positives += 1;
            r.flagged_clean += flagged as usize;
        }
    }
    r.detection_recall = ratio(r.flagged_flips, r.planted_flips);
    r.detection_precision = ratio(r.flagged_flips, r.flagged);
    r.flagged_clean_rate = ratio(r.flagged_clean, r.clean_positives);
    r.correction_accuracy = ratio(r.corrected_to_truth, r.flagged_flips);
    r.missing_recall = ratio(r.missing_recovered, r.planted_missing);
    r.missing_tail_recall = ratio(r.missing_tail_recovered, r.planted_missing_tail);
    Ok(r)
}
