use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Index of a predicate category inside a [`PredicateVocabulary`].
pub type PredicateId = usize;

/// Frequency group of a predicate category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategoryGroup {
    Head,
    Body,
    Tail,
}

impl CategoryGroup {
    pub const ALL: [CategoryGroup; 3] = [CategoryGroup::Head, CategoryGroup::Body, CategoryGroup::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryGroup::Head => "head",
            CategoryGroup::Body => "body",
            CategoryGroup::Tail => "tail",
        }
    }
}

/// One value per frequency group (per-group thresholds, percentiles, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupValues<T> {
    pub head: T,
    pub body: T,
    pub tail: T,
}

impl<T: Copy> GroupValues<T> {
    pub const fn new(head: T, body: T, tail: T) -> Self {
        GroupValues { head, body, tail }
    }

    pub fn get(&self, group: CategoryGroup) -> T {
        match group {
            CategoryGroup::Head => self.head,
            CategoryGroup::Body => self.body,
            CategoryGroup::Tail => self.tail,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (CategoryGroup, T)> + '_ {
        CategoryGroup::ALL.into_iter().map(move |g| (g, self.get(g)))
    }
}

/// Count thresholds separating head, body and tail categories.
///
/// A count strictly above `head_min` is head, strictly below `tail_max` is
/// tail, everything in between (both ends included) is body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupThresholds {
    pub head_min: u64,
    pub tail_max: u64,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        GroupThresholds {
            head_min: 10_000,
            tail_max: 500,
        }
    }
}

impl GroupThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.tail_max == 0 || self.head_min <= self.tail_max {
            return Err(Error::Config(format!(
                "group thresholds need head_min > tail_max > 0, got head_min={} tail_max={}",
                self.head_min, self.tail_max
            )));
        }
        Ok(())
    }

    pub fn classify(&self, count: u64) -> CategoryGroup {
        if count > self.head_min {
            CategoryGroup::Head
        } else if count < self.tail_max {
            CategoryGroup::Tail
        } else {
            CategoryGroup::Body
        }
    }
}

/// Assign every category to a frequency group.
pub fn group_predicates(counts: &[u64], thresholds: GroupThresholds) -> Result<Vec<CategoryGroup>> {
    thresholds.validate()?;
    Ok(counts.iter().map(|&c| thresholds.classify(c)).collect())
}

/// Predicate names, their training counts and their frequency groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateVocabulary {
    names: Vec<String>,
    counts: Vec<u64>,
    groups: Vec<CategoryGroup>,
    thresholds: GroupThresholds,
}

impl PredicateVocabulary {
    pub fn new(names: Vec<String>, counts: Vec<u64>, thresholds: GroupThresholds) -> Result<Self> {
        if names.len() != counts.len() {
            return Err(Error::Structural(format!(
                "vocabulary has {} names but {} counts",
                names.len(),
                counts.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Structural(format!("duplicate predicate name {name:?}")));
            }
        }
        let groups = group_predicates(&counts, thresholds)?;
        Ok(PredicateVocabulary {
            names,
            counts,
            groups,
            thresholds,
        })
    }

    pub fn empty() -> Self {
        PredicateVocabulary {
            names: Vec::new(),
            counts: Vec::new(),
            groups: Vec::new(),
            thresholds: GroupThresholds::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn groups(&self) -> &[CategoryGroup] {
        &self.groups
    }

    pub fn thresholds(&self) -> GroupThresholds {
        self.thresholds
    }

    pub fn name(&self, id: PredicateId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn group(&self, id: PredicateId) -> CategoryGroup {
        self.groups[id]
    }

    pub fn index_of(&self, name: &str) -> Option<PredicateId> {
        self.names.iter().position(|n| n == name)
    }

    /// Same names and counts, regrouped with new thresholds.
    pub fn regrouped(&self, thresholds: GroupThresholds) -> Result<Self> {
        PredicateVocabulary::new(self.names.clone(), self.counts.clone(), thresholds)
    }

    /// Same names, new counts (groups recomputed with the current thresholds).
    pub fn with_counts(&self, counts: Vec<u64>) -> Result<Self> {
        PredicateVocabulary::new(self.names.clone(), counts, self.thresholds)
    }
}
