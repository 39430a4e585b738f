use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dist::SoftLabel;
use crate::error::{Error, Result};
use crate::vocab::{PredicateId, PredicateVocabulary};

pub type SampleId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Where a sample currently sits in the cleaning pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartitionTag {
    PosOriginal,
    NegClean,
    NegNoisy,
    PosClean,
    PosNoisy,
    PosCorrected,
}

impl PartitionTag {
    pub fn initial(polarity: Polarity) -> Self {
        match polarity {
            Polarity::Positive => PartitionTag::PosOriginal,
            Polarity::Negative => PartitionTag::NegClean,
        }
    }

    /// Whether `self -> to` is an edge of the pipeline's transition graph.
    pub fn can_become(self, to: PartitionTag) -> bool {
        use PartitionTag::*;
        matches!(
            (self, to),
            (NegClean, NegNoisy)
                | (PosOriginal, PosClean)
                | (PosOriginal, PosNoisy)
                | (NegNoisy, PosClean)
                | (NegNoisy, PosNoisy)
                | (PosNoisy, PosCorrected)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionTag::PosOriginal => "pos_original",
            PartitionTag::NegClean => "neg_clean",
            PartitionTag::NegNoisy => "neg_noisy",
            PartitionTag::PosClean => "pos_clean",
            PartitionTag::PosNoisy => "pos_noisy",
            PartitionTag::PosCorrected => "pos_corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pos_original" => PartitionTag::PosOriginal,
            "neg_clean" => PartitionTag::NegClean,
            "neg_noisy" => PartitionTag::NegNoisy,
            "pos_clean" => PartitionTag::PosClean,
            "pos_noisy" => PartitionTag::PosNoisy,
            "pos_corrected" => PartitionTag::PosCorrected,
            _ => return None,
        })
    }
}

/// One relation-triplet instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub image_id: u64,
    pub subject: String,
    pub object: String,
    pub predicate: Option<PredicateId>,
    pub feature: Vec<f64>,
    pub polarity: Polarity,
}

/// Pipeline bookkeeping attached to a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleState {
    pub tag: PartitionTag,
    pub soft: Option<SoftLabel>,
    /// The sample was a negative that received a pseudo label.
    pub mined: bool,
}

impl SampleState {
    pub fn initial(polarity: Polarity) -> Self {
        SampleState {
            tag: PartitionTag::initial(polarity),
            soft: None,
            mined: false,
        }
    }
}

/// A validated collection of samples sharing one vocabulary and feature
/// dimension. Pipeline operations return new datasets; nothing mutates in
/// place once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocabulary: PredicateVocabulary,
    dim: usize,
    samples: Vec<Sample>,
    states: Vec<SampleState>,
    index: BTreeMap<SampleId, usize>,
}

impl Dataset {
    /// Fresh dataset: every sample starts in its initial partition.
    pub fn new(vocabulary: PredicateVocabulary, samples: Vec<Sample>) -> Result<Self> {
        let states = samples.iter().map(|s| SampleState::initial(s.polarity)).collect();
        Dataset::with_states(vocabulary, samples, states)
    }

    pub fn with_states(
        vocabulary: PredicateVocabulary,
        samples: Vec<Sample>,
        states: Vec<SampleState>,
    ) -> Result<Self> {
        if samples.len() != states.len() {
            return Err(Error::Structural(format!(
                "{} samples but {} partition states",
                samples.len(),
                states.len()
            )));
        }
        let dim = samples.first().map_or(0, |s| s.feature.len());
        let mut index = BTreeMap::new();
        for (i, (s, st)) in samples.iter().zip(&states).enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(Error::sample(s.id, "duplicate sample id"));
            }
            validate_sample(s, st, dim, vocabulary.len())?;
        }
        Ok(Dataset {
            vocabulary,
            dim,
            samples,
            states,
            index,
        })
    }

    pub fn vocabulary(&self) -> &PredicateVocabulary {
        &self.vocabulary
    }

    /// Feature dimension (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn states(&self) -> &[SampleState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn position(&self, id: SampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: SampleId) -> Option<(&Sample, &SampleState)> {
        self.position(id).map(|i| (&self.samples[i], &self.states[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sample, &SampleState)> {
        self.samples.iter().zip(&self.states)
    }

    /// Label used for training: the soft label's argmax when present,
    /// otherwise the (possibly pseudo) hard predicate.
    pub fn effective_label(&self, i: usize) -> Option<PredicateId> {
        match &self.states[i].soft {
            Some(soft) => Some(soft.argmax()),
            None => self.samples[i].predicate,
        }
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, &Sample)> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.polarity == Polarity::Positive)
    }

    pub fn count_tag(&self, tag: PartitionTag) -> usize {
        self.states.iter().filter(|s| s.tag == tag).count()
    }

    /// Keep the samples (and their states) accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Sample, &SampleState) -> bool) -> Dataset {
        let (samples, states): (Vec<_>, Vec<_>) = self
            .iter()
            .filter(|(s, st)| keep(s, st))
            .map(|(s, st)| (s.clone(), st.clone()))
            .unzip();
        Dataset::with_states(self.vocabulary.clone(), samples, states).expect("subset of a valid dataset is valid")
    }

    /// Same samples under a different vocabulary (e.g. regrouped counts).
    pub fn with_vocabulary(&self, vocabulary: PredicateVocabulary) -> Result<Dataset> {
        Dataset::with_states(vocabulary, self.samples.clone(), self.states.clone())
    }

    pub fn into_parts(self) -> (PredicateVocabulary, Vec<Sample>, Vec<SampleState>) {
        (self.vocabulary, self.samples, self.states)
    }

    /// Move sample `i` to `to`, refusing edges outside the transition graph.
    pub(crate) fn transition(&mut self, i: usize, to: PartitionTag) -> Result<()> {
        let from = self.states[i].tag;
        if !from.can_become(to) {
            return Err(Error::Transition {
                id: self.samples[i].id,
                from,
                to,
            });
        }
        self.states[i].tag = to;
        Ok(())
    }

    pub(crate) fn sample_mut(&mut self, i: usize) -> &mut Sample {
        &mut self.samples[i]
    }

    pub(crate) fn state_mut(&mut self, i: usize) -> &mut SampleState {
        &mut self.states[i]
    }
}

fn validate_sample(s: &Sample, st: &SampleState, dim: usize, n_predicates: usize) -> Result<()> {
    if s.feature.is_empty() {
        return Err(Error::sample(s.id, "feature vector is empty"));
    }
    if s.feature.len() != dim {
        return Err(Error::sample(
            s.id,
            format!(
                "feature dimension {} differs from dataset dimension {dim}",
                s.feature.len()
            ),
        ));
    }
    if s.feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::sample(s.id, "feature contains a non-finite value"));
    }
    match (s.polarity, s.predicate) {
        (Polarity::Positive, None) => return Err(Error::sample(s.id, "positive sample without predicate")),
        (Polarity::Negative, Some(_)) => return Err(Error::sample(s.id, "negative sample carries a predicate")),
        (_, Some(p)) if p >= n_predicates => {
            return Err(Error::sample(
                s.id,
                format!("predicate id {p} outside vocabulary of {n_predicates}"),
            ))
        }
        _ => {}
    }
    let tag_ok = match st.tag {
        PartitionTag::NegClean => s.polarity == Polarity::Negative && !st.mined,
        PartitionTag::NegNoisy => s.polarity == Polarity::Positive && st.mined,
        PartitionTag::PosOriginal => s.polarity == Polarity::Positive && !st.mined,
        PartitionTag::PosClean | PartitionTag::PosNoisy | PartitionTag::PosCorrected => {
            s.polarity == Polarity::Positive
        }
    };
    if !tag_ok {
        return Err(Error::sample(
            s.id,
            format!("partition {:?} inconsistent with polarity {:?}", st.tag, s.polarity),
        ));
    }
    if let Some(soft) = &st.soft {
        if s.polarity != Polarity::Positive {
            return Err(Error::sample(s.id, "soft label on a negative sample"));
        }
        if let Some((&k, _)) = soft.entries().iter().find(|(&k, _)| k >= n_predicates) {
            return Err(Error::sample(
                s.id,
                format!("soft label category {k} outside vocabulary"),
            ));
        }
    }
    Ok(())
}
