//! Pipeline configuration: one JSON object with a section per stage.

use std::path::PathBuf;

use nicest_core::neg_nsd::{ClassWeighting, NegNsdConfig};
use nicest_core::nist::{FusionConfig, FusionMode, StudentConfig};
use nicest_core::nsc::WknnConfig;
use nicest_core::pos_nsd::CutoffConfig;
use nicest_core::GroupValues;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    NegNsd,
    PosNsd,
    Nsc,
    Nist,
    SplitOod,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::NegNsd => "neg-nsd",
            Stage::PosNsd => "pos-nsd",
            Stage::Nsc => "nsc",
            Stage::Nist => "nist",
            Stage::SplitOod => "split-ood",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseFrequency,
}

impl From<Weighting> for ClassWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Uniform => ClassWeighting::Uniform,
            Weighting::InverseFrequency => ClassWeighting::InverseFrequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegNsdSection {
    pub theta_head: f64,
    pub theta_body: f64,
    pub theta_tail: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub class_weighting: Weighting,
    /// Use an external predictions sidecar instead of training the
    /// stand-in classifier.
    pub predictions: Option<PathBuf>,
}

impl Default for NegNsdSection {
    fn default() -> Self {
        let d = NegNsdConfig::default();
        NegNsdSection {
            theta_head: d.theta.head,
            theta_body: d.theta.body,
            theta_tail: d.theta.tail,
            lambda: d.lambda,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            class_weighting: Weighting::InverseFrequency,
            predictions: None,
        }
    }
}

impl NegNsdSection {
    pub fn to_core(&self, seed: u64) -> Result<NegNsdConfig> {
        let c = NegNsdConfig {
            theta: GroupValues::new(self.theta_head, self.theta_body, self.theta_tail),
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            class_weighting: self.class_weighting.into(),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosNsdSection {
    pub alpha_head: f64,
    pub alpha_body: f64,
    pub alpha_tail: f64,
    pub n_subsets: usize,
}

impl Default for PosNsdSection {
    fn default() -> Self {
        let d = CutoffConfig::default();
        PosNsdSection {
            alpha_head: d.alpha.head,
            alpha_body: d.alpha.body,
            alpha_tail: d.alpha.tail,
            n_subsets: d.n_subsets,
        }
    }
}

impl PosNsdSection {
    pub fn to_core(&self) -> Result<CutoffConfig> {
        let c = CutoffConfig {
            alpha: GroupValues::new(self.alpha_head, self.alpha_body, self.alpha_tail),
            n_subsets: self.n_subsets,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NscSection {
    pub knn_k: usize,
    pub knn_a: f64,
    pub knn_b: f64,
    pub knn_c: f64,
}

impl Default for NscSection {
    fn default() -> Self {
        let d = WknnConfig::default();
        NscSection {
            knn_k: d.k,
            knn_a: d.a,
            knn_b: d.b,
            knn_c: d.c,
        }
    }
}

impl NscSection {
    pub fn to_core(&self) -> Result<WknnConfig> {
        let c = WknnConfig {
            k: self.knn_k,
            a: self.knn_a,
            b: self.knn_b,
            c: self.knn_c,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fixed,
    Adapt,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NistSection {
    pub mode: Mode,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for NistSection {
    fn default() -> Self {
        let s = StudentConfig::default();
        NistSection {
            mode: Mode::Group,
            epsilon: s.epsilon,
            learning_rate: s.learning_rate,
            epochs: s.epochs,
            batch_size: s.batch_size,
        }
    }
}

impl NistSection {
    pub fn fusion(&self) -> Result<FusionConfig> {
        let c = FusionConfig {
            mode: match self.mode {
                Mode::Fixed => FusionMode::Fixed,
                Mode::Adapt => FusionMode::Adapt,
                Mode::Group => FusionMode::Group,
            },
            epsilon: self.epsilon,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn student(&self, seed: u64) -> StudentConfig {
        StudentConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub triplet_frac: f64,
    pub image_frac: f64,
    /// Test share of the random image split used without `split_ood`.
    pub test_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            triplet_frac: 0.2,
            image_frac: 0.7,
            test_frac: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { ks: vec![50, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides `synth.seed` and seeds every training stage.
    pub seed: Option<u64>,
    pub stages: Vec<Stage>,
    /// Existing dataset to process instead of generating one.
    pub input: Option<PathBuf>,
    /// Noise ledger for `input`, enabling the recovery report.
    pub ledger: Option<PathBuf>,
    pub synth: SynthConfig,
    pub neg_nsd: NegNsdSection,
    pub pos_nsd: PosNsdSection,
    pub nsc: NscSection,
    pub nist: NistSection,
    pub split: SplitSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            stages: vec![Stage::NegNsd, Stage::PosNsd, Stage::Nsc, Stage::Nist],
            input: None,
            ledger: None,
            synth: SynthConfig::default(),
            neg_nsd: NegNsdSection::default(),
            pos_nsd: PosNsdSection::default(),
            nsc: NscSection::default(),
            nist: NistSection::default(),
            split: SplitSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.synth.seed)
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Resolve the seed override into `synth.seed` and check every section.
    pub fn resolved(mut self) -> Result<Self> {
        self.synth.seed = self.effective_seed();
        self.seed = Some(self.synth.seed);
        let mut seen = self.stages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.stages.len() {
            return Err(Error::Config("stage listed twice".into()));
        }
        if self.has(Stage::Nsc) && !self.has(Stage::PosNsd) {
            return Err(Error::Config("nsc needs pos_nsd to flag samples first".into()));
        }
        if self.input.is_none() {
            self.synth.validate()?;
        }
        let seed = self.synth.seed;
        self.neg_nsd.to_core(seed)?;
        self.pos_nsd.to_core()?;
        self.nsc.to_core()?;
        self.nist.fusion()?;
        let s = &self.split;
        for (name, v, upper_closed) in [
            ("triplet_frac", s.triplet_frac, false),
            ("image_frac", s.image_frac, true),
            ("test_frac", s.test_frac, false),
        ] {
            if !(v > 0.0 && (v < 1.0 || (upper_closed && v == 1.0))) {
                return Err(Error::Config(format!("split.{name} = {v} out of range")));
            }
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config("eval.ks must be non-empty positive integers".into()));
        }
        Ok(self)
    }
}
