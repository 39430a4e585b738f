//! Stage drivers shared by the CLI subcommands and the end-to-end run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nicest_core::metrics::{self, MetricReport, ScoredPrediction, ScoredTriplet};
use nicest_core::neg_nsd::{
    self, ClassWeighting, ConfidenceClassifier, LabeledFeature, NegNsdConfig, NegNsdOutcome, Prediction,
};
use nicest_core::nist::{self, FusionConfig, StudentConfig, TeacherOutputs};
use nicest_core::ood_split::{self, ImageSplit, SplitStats};
use nicest_core::pos_nsd::{self, CutoffConfig, PosNsdOutcome};
use nicest_core::{nsc, Dataset, Distribution, PartitionTag, Polarity, PredicateVocabulary, SampleId};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, Stage};
use crate::error::{Error, Result};
use crate::io;
use crate::synth::{self, NoiseLedger};

/// Thread pool with `threads` workers; 0 picks the rayon default.
pub fn thread_pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Per-category detection run on `pool`. Categories are independent and
/// collected in plan order, so the result does not depend on the pool size.
pub fn detect_noisy_positives(
    dataset: &Dataset,
    config: &CutoffConfig,
    with_delta: bool,
    pool: &ThreadPool,
) -> Result<PosNsdOutcome> {
    let jobs = pos_nsd::plan(dataset, config)?;
    let categories = pool.install(|| {
        jobs.par_iter()
            .map(|j| pos_nsd::process_category(j, config.n_subsets, with_delta))
            .collect::<nicest_core::Result<Vec<_>>>()
    })?;
    Ok(PosNsdOutcome {
        dataset: pos_nsd::apply(dataset, &categories)?,
        categories,
    })
}

/// Mining from externally supplied predictions. Rows for samples that are
/// not unmined negatives of `dataset` are skipped.
pub fn mine_from_predictions(
    dataset: &Dataset,
    predictions: &[(SampleId, Prediction)],
    config: &NegNsdConfig,
) -> Result<(Vec<(SampleId, nicest_core::PredicateId)>, Dataset)> {
    let n = dataset.vocabulary().len();
    let usable: Vec<(SampleId, Prediction)> = predictions
        .iter()
        .filter(|(id, p)| {
            p.probs.len() == n
                && dataset
                    .get(*id)
                    .is_some_and(|(s, st)| s.polarity == Polarity::Negative && st.tag == PartitionTag::NegClean)
        })
        .cloned()
        .collect();
    if usable.len() < predictions.len() {
        log::warn!(
            "skipped {} prediction rows that match no unmined negative",
            predictions.len() - usable.len()
        );
    }
    let detections = neg_nsd::detect_negatives(&usable, dataset.vocabulary(), &config.theta);
    let merged = neg_nsd::merge_positive_set(dataset, &detections)?;
    Ok((detections, merged))
}

/// Labelled training rows: positives not currently flagged noisy, with
/// their effective label.
pub fn training_rows(dataset: &Dataset) -> Vec<(SampleId, LabeledFeature<'_>)> {
    dataset
        .iter()
        .enumerate()
        .filter(|(_, (s, st))| s.polarity == Polarity::Positive && st.tag != PartitionTag::PosNoisy)
        .filter_map(|(i, (s, _))| {
            dataset.effective_label(i).map(|label| {
                (
                    s.id,
                    LabeledFeature {
                        feature: &s.feature,
                        label,
                    },
                )
            })
        })
        .collect()
}

pub fn train_weighted(
    dataset: &Dataset,
    config: &NegNsdConfig,
    weighting: ClassWeighting,
) -> Result<ConfidenceClassifier> {
    let rows = training_rows(dataset);
    let examples: Vec<LabeledFeature<'_>> = rows.iter().map(|(_, e)| *e).collect();
    let cfg = NegNsdConfig {
        class_weighting: weighting,
        ..config.clone()
    };
    Ok(neg_nsd::train_classifier(&examples, dataset.vocabulary().len(), &cfg)?)
}

/// Class distributions of `model` for every training row.
pub fn teacher_outputs(model: &ConfidenceClassifier, dataset: &Dataset) -> Result<Vec<(SampleId, Distribution)>> {
    training_rows(dataset)
        .into_iter()
        .map(|(id, e)| Ok((id, model.predict_features(e.feature)?.probs)))
        .collect()
}

/// Head- and tail-biased teachers, their fused targets and a student fit to
/// those targets.
pub struct Distillation {
    pub head: Vec<(SampleId, Distribution)>,
    pub tail: Vec<(SampleId, Distribution)>,
    pub targets: Vec<(SampleId, Distribution)>,
    pub student: ConfidenceClassifier,
}

pub fn distill(
    dataset: &Dataset,
    teacher: &NegNsdConfig,
    fusion: &FusionConfig,
    student: &StudentConfig,
) -> Result<Distillation> {
    let head_model = train_weighted(dataset, teacher, ClassWeighting::Uniform)?;
    let tail_model = train_weighted(dataset, teacher, ClassWeighting::InverseFrequency)?;
    let head = teacher_outputs(&head_model, dataset)?;
    let tail = teacher_outputs(&tail_model, dataset)?;
    let aligned = TeacherOutputs::align(dataset, head.clone(), tail.clone())?;
    let targets = nist::fuse_dataset(&aligned, dataset.vocabulary(), fusion)?;
    let features: Vec<&[f64]> = targets
        .iter()
        .map(|(id, _)| {
            dataset
                .get(*id)
                .map(|(s, _)| s.feature.as_slice())
                .ok_or(nicest_core::Error::UnknownId(*id))
        })
        .collect::<nicest_core::Result<_>>()?;
    let dists: Vec<Distribution> = targets.iter().map(|(_, d)| d.clone()).collect();
    let student = nist::train_student(&features, &dists, dataset.vocabulary().len(), student)?;
    Ok(Distillation {
        head,
        tail,
        targets,
        student,
    })
}

/// One scored triplet per annotated pair of `test`: the model's top
/// predicate and its probability.
pub fn score_pairs(model: &ConfidenceClassifier, test: &Dataset) -> Result<Vec<ScoredPrediction>> {
    let mut by_image: BTreeMap<u64, Vec<ScoredTriplet>> = BTreeMap::new();
    for (s, _) in test.iter().filter(|(s, _)| s.polarity == Polarity::Positive) {
        let p = model.predict_features(&s.feature)?.probs;
        let k = p.argmax();
        by_image.entry(s.image_id).or_default().push(ScoredTriplet {
            subject: s.subject.clone(),
            object: s.object.clone(),
            predicate: k,
            score: p.as_slice()[k],
        });
    }
    Ok(by_image
        .into_iter()
        .map(|(image_id, triplets)| ScoredPrediction { image_id, triplets })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStatsJson {
    pub kl: f64,
    pub kl_mean: Option<f64>,
    /// Direction of both divergences.
    pub kl_direction: String,
    pub shared_pairs: usize,
    pub n_train_images: usize,
    pub n_test_images: usize,
    pub n_train_triplets: usize,
    pub n_test_triplets: usize,
}

impl From<&SplitStats> for SplitStatsJson {
    fn from(s: &SplitStats) -> Self {
        SplitStatsJson {
            kl: s.kl,
            kl_mean: s.kl_mean,
            kl_direction: "KL(train || test)".into(),
            shared_pairs: s.shared_pairs,
            n_train_images: s.n_train_images,
            n_test_images: s.n_test_images,
            n_train_triplets: s.n_train_triplets,
            n_test_triplets: s.n_test_triplets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub r_at: BTreeMap<String, f64>,
    pub mr_at: BTreeMap<String, f64>,
    pub mean: f64,
    pub per_predicate_recall: BTreeMap<String, f64>,
    pub group_mean_recall: BTreeMap<String, Option<f64>>,
}

impl MetricsJson {
    pub fn new(r: &MetricReport, vocab: &PredicateVocabulary) -> Self {
        MetricsJson {
            r_at: r.r_at.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            mr_at: r.mr_at.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            mean: r.mean,
            per_predicate_recall: r
                .per_predicate_recall
                .iter()
                .map(|(&p, &v)| (vocab.name(p).unwrap_or("?").to_string(), v))
                .collect(),
            group_mean_recall: r
                .group_mean_recall
                .iter()
                .map(|(g, v)| (g.as_str().to_string(), v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<String>,
    /// File name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything a pipeline run produced, in memory.
pub struct PipelineRun {
    pub manifest: Manifest,
    pub split_stats: SplitStats,
    pub recovery: Option<synth::RecoveryReport>,
    pub metrics: MetricReport,
    pub train: Dataset,
}

struct Out {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn dataset(&mut self, name: &str, d: &Dataset) -> Result<()> {
        let p = self.path(name);
        io::save_dataset(d, &p)?;
        let side = io::soft_path(&p);
        if side.exists() {
            self.written.push(side);
        }
        Ok(())
    }
}

/// Run every configured stage and write all artifacts plus `manifest.json`
/// into `out_dir`.
pub fn run_pipeline(config: PipelineConfig, out_dir: &Path, threads: usize) -> Result<PipelineRun> {
    let config = config.resolved()?;
    let seed = config.effective_seed();
    let pool = thread_pool(threads)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        written: Vec::new(),
    };

    let (dataset, ledger): (Dataset, Option<NoiseLedger>) = match &config.input {
        Some(path) => {
            let d = io::load_dataset(path).map_err(Error::in_stage("load"))?;
            let ledger = match &config.ledger {
                Some(lp) => Some(NoiseLedger::from_lines(io::read_jsonl(lp)?, d.vocabulary())?),
                None => None,
            };
            (d, ledger)
        }
        None => {
            let (d, ledger) = synth::generate(&config.synth).map_err(Error::in_stage("gen"))?;
            out.dataset("dataset.jsonl", &d)?;
            let p = out.path("ledger.jsonl");
            io::write_jsonl(&p, ledger.to_lines(d.vocabulary()))?;
            (d, Some(ledger))
        }
    };
    info!("{} samples, {} predicates", dataset.len(), dataset.vocabulary().len());

    let split = if config.has(Stage::SplitOod) {
        let list =
            ood_split::build_test_triplet_list(&ood_split::pair_predicate_counts(&dataset), config.split.triplet_frac)?;
        ood_split::split_images(&dataset, &list, config.split.image_frac)?
    } else {
        ood_split::random_image_split(&dataset, config.split.test_frac, seed)?
    };
    let (mut train, test) = ood_split::apply_split(&dataset, &split);
    let split_stats = ood_split::split_stats(&train, &test).map_err(|e| Error::in_stage("split")(e.into()))?;
    out.dataset("split_train.jsonl", &train)?;
    out.dataset("split_test.jsonl", &test)?;
    let p = out.path("split_stats.json");
    io::write_json(&p, &SplitStatsJson::from(&split_stats))?;
    info!("split: {} train / {} test images", split.train.len(), split.test.len());

    let neg_cfg = config.neg_nsd.to_core(seed)?;
    if config.has(Stage::NegNsd) {
        let stage = Error::in_stage("neg-nsd");
        train = match &config.neg_nsd.predictions {
            Some(path) => {
                let preds = io::load_predictions(path).map_err(stage)?;
                mine_from_predictions(&train, &preds, &neg_cfg).map_err(stage)?.1
            }
            None => {
                let NegNsdOutcome {
                    predictions, dataset, ..
                } = neg_nsd::run(&train, &neg_cfg).map_err(|e| stage(e.into()))?;
                io::save_predictions(&out.path("neg_predictions.jsonl"), &predictions)?;
                dataset
            }
        };
        out.dataset("neg_nsd.jsonl", &train)?;
    }

    if config.has(Stage::PosNsd) {
        let cutoff = config.pos_nsd.to_core()?;
        let outcome = detect_noisy_positives(&train, &cutoff, true, &pool).map_err(Error::in_stage("pos-nsd"))?;
        io::save_diagnostics(&out.path("pos_nsd_diagnostics.csv"), &outcome.categories)?;
        train = outcome.dataset;
        out.dataset("pos_nsd.jsonl", &train)?;
    }

    if config.has(Stage::Nsc) {
        let outcome = nsc::correct(&train, &config.nsc.to_core()?).map_err(|e| Error::in_stage("nsc")(e.into()))?;
        io::save_corrections(&out.path("corrections.csv"), &outcome.records, train.vocabulary())?;
        train = outcome.dataset;
        out.dataset("nsc.jsonl", &train)?;
    }

    let recovery = match &ledger {
        Some(l) => {
            let r = synth::plant_report(l, &train)?;
            io::write_json(&out.path("recovery.json"), &r)?;
            Some(r)
        }
        None => None,
    };

    let model = if config.has(Stage::Nist) {
        let d = distill(&train, &neg_cfg, &config.nist.fusion()?, &config.nist.student(seed))
            .map_err(Error::in_stage("nist"))?;
        io::save_distributions(&out.path("teacher_head.jsonl"), &d.head)?;
        io::save_distributions(&out.path("teacher_tail.jsonl"), &d.tail)?;
        io::save_distributions(&out.path("nist_targets.jsonl"), &d.targets)?;
        d.student
    } else {
        train_weighted(&train, &neg_cfg, ClassWeighting::Uniform).map_err(Error::in_stage("train"))?
    };

    let scored = score_pairs(&model, &test)?;
    io::save_scored(&out.path("test_scores.jsonl"), &scored, test.vocabulary())?;
    let report = metrics::evaluate(&scored, &test, &config.eval.ks, test.vocabulary())
        .map_err(|e| Error::in_stage("eval")(e.into()))?;
    io::write_json(&out.path("metrics.json"), &MetricsJson::new(&report, test.vocabulary()))?;

    let config_bytes = serde_json::to_vec(&config).map_err(|e| Error::Config(e.to_string()))?;
    let mut outputs = BTreeMap::new();
    for p in &out.written {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        outputs.insert(name, sha256_file(p)?);
    }
    let manifest = Manifest {
        config_sha256: hex::encode(Sha256::digest(&config_bytes)),
        seed,
        stages: config.stages.iter().map(|s| s.as_str().to_string()).collect(),
        outputs,
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(PipelineRun {
        manifest,
        split_stats,
        recovery,
        metrics: report,
        train,
    })
}

/// Split helper for the `split-ood` subcommand.
pub fn ood(
    dataset: &Dataset,
    triplet_frac: f64,
    image_frac: f64,
) -> Result<(ImageSplit, Dataset, Dataset, SplitStats)> {
    let (split, train, test) = ood_split::ood_split(dataset, triplet_frac, image_frac)?;
    let stats = ood_split::split_stats(&train, &test)?;
    Ok((split, train, test, stats))
}
