//! JSON Lines datasets and sidecars, CSV reports.
//!
//! A dataset file starts with a header line
//! `{"vocab": [...], "counts": [...], "dim": d}` followed by one sample per
//! line. Features are written at `f32` precision. Soft labels live in a
//! sidecar next to the dataset (`name.soft.jsonl` for `name.jsonl`).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nicest_core::metrics::{ScoredPrediction, ScoredTriplet};
use nicest_core::neg_nsd::Prediction;
use nicest_core::nsc::CorrectionRecord;
use nicest_core::pos_nsd::CategoryOutcome;
use nicest_core::{
    Dataset, Distribution, GroupThresholds, PartitionTag, Polarity, PredicateVocabulary, Sample, SampleId, SampleState,
    SoftLabel,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    vocab: Vec<String>,
    counts: Vec<u64>,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_min: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail_max: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: u64,
    subject: String,
    object: String,
    predicate: Option<String>,
    polarity: String,
    feature: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    mined: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SoftLine {
    id: u64,
    soft: BTreeMap<String, f64>,
}

/// Sidecar holding soft labels for `path`.
pub fn soft_path(path: &Path) -> PathBuf {
    path.with_extension("soft.jsonl")
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    lines(path)?
        .into_iter()
        .map(|(n, l)| serde_json::from_str(&l).map_err(|e| Error::parse(path, n, e.to_string())))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        write_line(&mut w, path, &row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

fn write_line<T: Serialize>(w: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

fn polarity_str(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "pos",
        Polarity::Negative => "neg",
    }
}

/// Load a dataset and, when present, its soft-label sidecar.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let rows = lines(path)?;
    let Some(((header_line, header), body)) = rows.split_first() else {
        return Ok(Dataset::new(PredicateVocabulary::empty(), Vec::new())?);
    };
    let header: Header =
        serde_json::from_str(header).map_err(|e| Error::parse(path, *header_line, format!("header: {e}")))?;
    let defaults = GroupThresholds::default();
    let thresholds = GroupThresholds {
        head_min: header.head_min.unwrap_or(defaults.head_min),
        tail_max: header.tail_max.unwrap_or(defaults.tail_max),
    };
    let vocab = PredicateVocabulary::new(header.vocab, header.counts, thresholds)
        .map_err(|e| Error::parse(path, *header_line, e.to_string()))?;

    let mut samples = Vec::with_capacity(body.len());
    let mut states = Vec::with_capacity(body.len());
    for (k, (n, text)) in body.iter().enumerate() {
        let line: SampleLine = serde_json::from_str(text).map_err(|e| Error::parse(path, *n, e.to_string()))?;
        let polarity = match line.polarity.as_str() {
            "pos" => Polarity::Positive,
            "neg" => Polarity::Negative,
            other => return Err(Error::parse(path, *n, format!("unknown polarity {other:?}"))),
        };
        let predicate = match &line.predicate {
            None => None,
            Some(name) => Some(
                vocab
                    .index_of(name)
                    .ok_or_else(|| Error::parse(path, *n, format!("predicate {name:?} not in vocabulary")))?,
            ),
        };
        if line.feature.len() != header.dim {
            return Err(Error::parse(
                path,
                *n,
                format!("feature has {} values, header says {}", line.feature.len(), header.dim),
            ));
        }
        let tag = match &line.tag {
            None => PartitionTag::initial(polarity),
            Some(t) => PartitionTag::parse(t).ok_or_else(|| Error::parse(path, *n, format!("unknown tag {t:?}")))?,
        };
        samples.push(Sample {
            id: line.id.unwrap_or(k as u64),
            image_id: line.image_id,
            subject: line.subject,
            object: line.object,
            predicate,
            feature: line.feature.iter().map(|&v| v as f64).collect(),
            polarity,
        });
        states.push(SampleState {
            tag,
            soft: None,
            mined: line.mined,
        });
    }

    let sidecar = soft_path(path);
    if sidecar.exists() {
        let index: BTreeMap<SampleId, usize> = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        for (n, text) in lines(&sidecar)? {
            let line: SoftLine = serde_json::from_str(&text).map_err(|e| Error::parse(&sidecar, n, e.to_string()))?;
            let i = *index
                .get(&line.id)
                .ok_or_else(|| Error::parse(&sidecar, n, format!("unknown sample id {}", line.id)))?;
            let mut entries = BTreeMap::new();
            for (name, score) in line.soft {
                let p = vocab
                    .index_of(&name)
                    .ok_or_else(|| Error::parse(&sidecar, n, format!("predicate {name:?} not in vocabulary")))?;
                entries.insert(p, score);
            }
            states[i].soft = Some(SoftLabel::new(entries).map_err(|e| Error::parse(&sidecar, n, e.to_string()))?);
        }
    }
    Ok(Dataset::with_states(vocab, samples, states)?)
}

/// Write a dataset and its soft-label sidecar. A stale sidecar is removed
/// when the dataset carries no soft labels.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let vocab = dataset.vocabulary();
    let th = vocab.thresholds();
    let defaults = GroupThresholds::default();
    let custom = th != defaults;
    let header = Header {
        vocab: vocab.names().to_vec(),
        counts: vocab.counts().to_vec(),
        dim: dataset.dim(),
        head_min: custom.then_some(th.head_min),
        tail_max: custom.then_some(th.tail_max),
    };
    let name = |p: usize| vocab.names()[p].clone();
    let mut w = create(path)?;
    write_line(&mut w, path, &header)?;
    let mut soft = Vec::new();
    for (s, st) in dataset.iter() {
        let tag = (st.tag != PartitionTag::initial(s.polarity)).then(|| st.tag.as_str().to_string());
        write_line(
            &mut w,
            path,
            &SampleLine {
                id: Some(s.id),
                image_id: s.image_id,
                subject: s.subject.clone(),
                object: s.object.clone(),
                predicate: s.predicate.map(name),
                polarity: polarity_str(s.polarity).to_string(),
                feature: s.feature.iter().map(|&v| v as f32).collect(),
                tag,
                mined: st.mined,
            },
        )?;
        if let Some(label) = &st.soft {
            soft.push(SoftLine {
                id: s.id,
                soft: label.entries().iter().map(|(&p, &v)| (name(p), v)).collect(),
            });
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = soft_path(path);
    if soft.is_empty() {
        match fs::remove_file(&sidecar) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&sidecar, e)),
            _ => Ok(()),
        }
    } else {
        write_jsonl(&sidecar, soft)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: u64,
    pub probs: Vec<f64>,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbLine {
    pub id: u64,
    pub probs: Vec<f64>,
}

pub fn save_predictions(path: &Path, predictions: &[(SampleId, Prediction)]) -> Result<()> {
    write_jsonl(
        path,
        predictions.iter().map(|(id, p)| PredictionLine {
            id: *id,
            probs: p.probs.as_slice().to_vec(),
            conf: p.confidence,
        }),
    )
}

pub fn load_predictions(path: &Path) -> Result<Vec<(SampleId, Prediction)>> {
    lines(path)?
        .into_iter()
        .map(|(n, text)| {
            let line: PredictionLine = serde_json::from_str(&text).map_err(|e| Error::parse(path, n, e.to_string()))?;
            if !(line.conf >= 0.0 && line.conf <= 1.0) {
                return Err(Error::parse(
                    path,
                    n,
                    format!("confidence {} outside [0, 1]", line.conf),
                ));
            }
            let probs = Distribution::new(line.probs).map_err(|e| Error::parse(path, n, e.to_string()))?;
            Ok((
                line.id,
                Prediction {
                    probs,
                    confidence: line.conf,
                },
            ))
        })
        .collect()
}

pub fn save_distributions(path: &Path, rows: &[(SampleId, Distribution)]) -> Result<()> {
    write_jsonl(
        path,
        rows.iter().map(|(id, d)| ProbLine {
            id: *id,
            probs: d.as_slice().to_vec(),
        }),
    )
}

pub fn load_distributions(path: &Path) -> Result<Vec<(SampleId, Distribution)>> {
    lines(path)?
        .into_iter()
        .map(|(n, text)| {
            let line: ProbLine = serde_json::from_str(&text).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let d = Distribution::new(line.probs).map_err(|e| Error::parse(path, n, e.to_string()))?;
            Ok((line.id, d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TripletLine {
    subject: String,
    object: String,
    predicate: String,
    score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoredLine {
    image_id: u64,
    triplets: Vec<TripletLine>,
}

/// Scored triplets, one image per line, predicates by name.
pub fn save_scored(path: &Path, preds: &[ScoredPrediction], vocab: &PredicateVocabulary) -> Result<()> {
    write_jsonl(
        path,
        preds.iter().map(|p| ScoredLine {
            image_id: p.image_id,
            triplets: p
                .triplets
                .iter()
                .map(|t| TripletLine {
                    subject: t.subject.clone(),
                    object: t.object.clone(),
                    predicate: vocab.names()[t.predicate].clone(),
                    score: t.score,
                })
                .collect(),
        }),
    )
}

pub fn load_scored(path: &Path, vocab: &PredicateVocabulary) -> Result<Vec<ScoredPrediction>> {
    lines(path)?
        .into_iter()
        .map(|(n, text)| {
            let line: ScoredLine = serde_json::from_str(&text).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let triplets = line
                .triplets
                .into_iter()
                .map(|t| {
                    let predicate = vocab.index_of(&t.predicate).ok_or_else(|| {
                        Error::parse(path, n, format!("predicate {:?} not in vocabulary", t.predicate))
                    })?;
                    Ok(ScoredTriplet {
                        subject: t.subject,
                        object: t.object,
                        predicate,
                        score: t.score,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ScoredPrediction {
                image_id: line.image_id,
                triplets,
            })
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

/// `id,old_label,raw_label,s_raw,s_ori`; the raw label is empty when the
/// sample had no clean neighbours.
pub fn save_corrections(path: &Path, records: &[CorrectionRecord], vocab: &PredicateVocabulary) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["id", "old_label", "raw_label", "s_raw", "s_ori"])
        .map_err(&err)?;
    for r in records {
        let raw = r.raw.map(|p| vocab.names()[p].as_str()).unwrap_or("");
        w.write_record([
            r.id.to_string().as_str(),
            vocab.names()[r.original].as_str(),
            raw,
            r.s_raw.to_string().as_str(),
            r.s_ori.to_string().as_str(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `id,rho,delta,cluster,tag` for every processed positive.
pub fn save_diagnostics(path: &Path, categories: &[CategoryOutcome]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["id", "rho", "delta", "cluster", "tag"]).map_err(&err)?;
    for c in categories {
        for j in 0..c.ids.len() {
            let delta = c.delta.as_ref().map(|d| d[j].to_string()).unwrap_or_default();
            let tag = if c.noisy[j] {
                PartitionTag::PosNoisy
            } else {
                PartitionTag::PosClean
            };
            w.write_record([
                c.ids[j].to_string(),
                c.rho[j].to_string(),
                delta,
                c.subset[j].to_string(),
                tag.as_str().to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
