//! Missing-annotation mining among negatives.
//!
//! A linear classifier with two heads is trained on positives only: a softmax
//! classification branch and a sigmoid confidence branch. During training the
//! prediction is interpolated toward the target by the confidence (a "hint"
//! that costs `-λ·log c`). At inference, negatives whose confidence clears the
//! threshold of their predicted category's group get that category as a
//! pseudo label.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, PartitionTag, Polarity, Sample, SampleId};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::math::{self, clamp_prob, PROB_EPS};
use crate::vocab::{GroupValues, PredicateId, PredicateVocabulary};

/// Linear two-branch model. `class_weights` is `(dim + 1) × n_classes`
/// row-major with the bias in the last row; `conf_weights` has `dim + 1`
/// entries, bias last.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceClassifier {
    dim: usize,
    n_classes: usize,
    class_weights: Vec<f64>,
    conf_weights: Vec<f64>,
}

/// Output of [`ConfidenceClassifier`] for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Distribution,
    pub confidence: f64,
}

/// Gradient of the per-sample objective, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub class: Vec<f64>,
    pub conf: Vec<f64>,
}

impl ConfidenceClassifier {
    pub fn zeros(dim: usize, n_classes: usize) -> Self {
        ConfidenceClassifier {
            dim,
            n_classes,
            class_weights: vec![0.0; (dim + 1) * n_classes],
            conf_weights: vec![0.0; dim + 1],
        }
    }

    pub fn from_parts(dim: usize, n_classes: usize, class_weights: Vec<f64>, conf_weights: Vec<f64>) -> Result<Self> {
        if class_weights.len() != (dim + 1) * n_classes {
            return Err(Error::DimensionMismatch {
                expected: (dim + 1) * n_classes,
                found: class_weights.len(),
            });
        }
        if conf_weights.len() != dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim + 1,
                found: conf_weights.len(),
            });
        }
        Ok(ConfidenceClassifier {
            dim,
            n_classes,
            class_weights,
            conf_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn conf_weights(&self) -> &[f64] {
        &self.conf_weights
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.class_weights, &mut self.conf_weights)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Class logits and the confidence logit.
    pub fn logits(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let c = self.n_classes;
        let bias = &self.class_weights[self.dim * c..];
        let mut z = bias.to_vec();
        for (r, &xr) in x.iter().enumerate() {
            let row = &self.class_weights[r * c..(r + 1) * c];
            for (zk, &w) in z.iter_mut().zip(row) {
                *zk += xr * w;
            }
        }
        let u = self.conf_weights[self.dim] + x.iter().zip(&self.conf_weights).map(|(a, b)| a * b).sum::<f64>();
        (z, u)
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<Prediction> {
        let (z, u) = self.logits(x)?;
        Ok(Prediction {
            probs: Distribution::from_computed(math::softmax(&z)),
            confidence: math::sigmoid(u),
        })
    }

    /// Objective for one labelled sample (hint interpolation followed by
    /// weighted cross-entropy and the confidence penalty) and its gradient
    /// with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        x: &[f64],
        label: PredicateId,
        class_w: &[f64],
        lambda: f64,
    ) -> Result<(f64, Gradient)> {
        self.check_dim(x)?;
        if label >= self.n_classes {
            return Err(Error::InvalidInput(format!(
                "label {label} outside {} classes",
                self.n_classes
            )));
        }
        let (z, u) = self.logits_unchecked(x);
        let p = math::softmax(&z);
        let c = math::sigmoid(u);
        let py = p[label];
        let adj = c * py + (1.0 - c);
        let adj_clamped = clamp_prob(adj, PROB_EPS);
        let c_clamped = clamp_prob(c, PROB_EPS);
        let wy = class_w[label];
        let loss = -wy * math::ln(adj_clamped) - lambda * math::ln(c_clamped);

        // d loss / d adj, zero where the clamp is active.
        let dl_dadj = if adj > PROB_EPS && adj < 1.0 - PROB_EPS {
            -wy / adj
        } else {
            0.0
        };
        let dl_dc_penalty = if c > PROB_EPS && c < 1.0 - PROB_EPS {
            -lambda / c
        } else {
            0.0
        };

        // adj = c·p_y + 1 − c
        let dl_dpy = dl_dadj * c;
        let dl_dz: Vec<f64> = (0..self.n_classes)
            .map(|k| {
                let delta = if k == label { 1.0 } else { 0.0 };
                dl_dpy * py * (delta - p[k])
            })
            .collect();
        let dl_dc = dl_dadj * (py - 1.0) + dl_dc_penalty;
        let dl_du = dl_dc * c * (1.0 - c);

        let nc = self.n_classes;
        let mut class = vec![0.0; self.class_weights.len()];
        for (r, &xr) in x.iter().chain(core::iter::once(&1.0)).enumerate() {
            for (g, &d) in class[r * nc..(r + 1) * nc].iter_mut().zip(&dl_dz) {
                *g = xr * d;
            }
        }
        let conf = x.iter().chain(core::iter::once(&1.0)).map(|&xr| xr * dl_du).collect();
        Ok((loss, Gradient { class, conf }))
    }
}

/// Forward pass on a dataset sample.
pub fn predict(classifier: &ConfidenceClassifier, sample: &Sample) -> Result<Prediction> {
    classifier.predict_features(&sample.feature)
}

/// Confidence-interpolated prediction `c·p + (1 − c)·y`.
pub fn adjust_probs(p: &Distribution, c: f64, y: &Distribution) -> Result<Distribution> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: y.len(),
        });
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidInput(format!("confidence {c} outside [0, 1]")));
    }
    let out = p
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&pj, &yj)| (c * pj + (1.0 - c) * yj).clamp(0.0, 1.0))
        .collect();
    Ok(Distribution::from_computed(out))
}

/// Weighted cross-entropy of the adjusted prediction plus `-λ·log c`.
/// Probabilities and `c` are clamped to `[1e-7, 1 − 1e-7]` inside the logs.
pub fn neg_nsd_loss(p_adj: &Distribution, y: &Distribution, c: f64, class_w: &[f64], lambda: f64) -> Result<f64> {
    if p_adj.len() != y.len() || class_w.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: if p_adj.len() != y.len() {
                p_adj.len()
            } else {
                class_w.len()
            },
        });
    }
    if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
        return Err(Error::InvalidInput(format!("confidence {c} outside [0, 1]")));
    }
    let xe: f64 = p_adj
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(class_w)
        .filter(|((_, &yj), _)| yj != 0.0)
        .map(|((&pj, &yj), &wj)| -wj * math::ln(clamp_prob(pj, PROB_EPS)) * yj)
        .sum();
    Ok(xe - lambda * math::ln(clamp_prob(c, PROB_EPS)))
}

/// Reciprocal-frequency class weights rescaled to sum to the number of
/// classes. Classes with zero count get weight 0.
pub fn inverse_frequency_weights(counts: &[u64]) -> Vec<f64> {
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return raw;
    }
    let scale = counts.len() as f64 / total;
    raw.into_iter().map(|w| w * scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    /// Every class weighs 1.
    Uniform,
    /// Reciprocal training frequency, normalised to sum to the class count.
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegNsdConfig {
    /// Confidence threshold per group of the predicted category. A value of
    /// 1.0 disables mining for that group.
    pub theta: GroupValues<f64>,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for NegNsdConfig {
    fn default() -> Self {
        NegNsdConfig {
            theta: GroupValues::new(1.0, 1.0, 0.60),
            lambda: 0.1,
            learning_rate: 0.01,
            epochs: 40,
            batch_size: 64,
            seed: 0,
            class_weighting: ClassWeighting::InverseFrequency,
        }
    }
}

impl NegNsdConfig {
    pub fn validate(&self) -> Result<()> {
        for (g, t) in self.theta.iter() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("theta_{} = {t} outside [0, 1]", g.as_str())));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate = {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A training feature with its hard label.
#[derive(Debug, Clone, Copy)]
pub struct LabeledFeature<'a> {
    pub feature: &'a [f64],
    pub label: PredicateId,
}

/// Training examples drawn from a dataset's positives: every positive
/// except those flagged noisy, labelled with [`Dataset::effective_label`].
pub fn positive_examples(dataset: &Dataset) -> Vec<LabeledFeature<'_>> {
    dataset
        .iter()
        .enumerate()
        .filter(|(_, (s, st))| s.polarity == Polarity::Positive && st.tag != PartitionTag::PosNoisy)
        .filter_map(|(i, (s, _))| {
            dataset.effective_label(i).map(|label| LabeledFeature {
                feature: &s.feature,
                label,
            })
        })
        .collect()
}

fn weights_for(examples: &[LabeledFeature<'_>], n_classes: usize, weighting: ClassWeighting) -> Vec<f64> {
    match weighting {
        ClassWeighting::Uniform => vec![1.0; n_classes],
        ClassWeighting::InverseFrequency => {
            let mut counts = vec![0u64; n_classes];
            for e in examples {
                counts[e.label] += 1;
            }
            inverse_frequency_weights(&counts)
        }
    }
}

/// Mean per-sample objective over `examples`.
pub fn mean_loss(
    classifier: &ConfidenceClassifier,
    examples: &[LabeledFeature<'_>],
    class_w: &[f64],
    lambda: f64,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let mut total = 0.0;
    for e in examples {
        total += classifier.loss_and_gradient(e.feature, e.label, class_w, lambda)?.0;
    }
    Ok(total / examples.len() as f64)
}

/// Mini-batch gradient descent on the mean objective, starting from zero
/// weights. Deterministic for a fixed seed.
pub fn train_classifier(
    examples: &[LabeledFeature<'_>],
    n_classes: usize,
    config: &NegNsdConfig,
) -> Result<ConfidenceClassifier> {
    config.validate()?;
    let first = examples.first().ok_or(Error::Empty("training examples"))?;
    let dim = first.feature.len();
    if n_classes == 0 {
        return Err(Error::Empty("predicate vocabulary"));
    }
    let class_w = weights_for(examples, n_classes, config.class_weighting);
    let mut model = ConfidenceClassifier::zeros(dim, n_classes);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grad_class = vec![0.0; model.class_weights.len()];
    let mut grad_conf = vec![0.0; model.conf_weights.len()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad_class.iter_mut().for_each(|g| *g = 0.0);
            grad_conf.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let e = &examples[i];
                let (loss, g) = model.loss_and_gradient(e.feature, e.label, &class_w, config.lambda)?;
                batch_loss += loss;
                grad_class.iter_mut().zip(&g.class).for_each(|(a, b)| *a += b);
                grad_conf.iter_mut().zip(&g.conf).for_each(|(a, b)| *a += b);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss diverged in epoch {epoch}")));
            }
            let step = config.learning_rate / batch.len() as f64;
            let (wc, wf) = model.params_mut();
            wc.iter_mut().zip(&grad_class).for_each(|(w, g)| *w -= step * g);
            wf.iter_mut().zip(&grad_conf).for_each(|(w, g)| *w -= step * g);
        }
    }
    Ok(model)
}

/// Negatives whose confidence reaches the threshold of their predicted
/// category's group, paired with that category as pseudo label.
///
/// Output order follows `predictions`.
pub fn detect_negatives(
    predictions: &[(SampleId, Prediction)],
    vocab: &PredicateVocabulary,
    theta: &GroupValues<f64>,
) -> Vec<(SampleId, PredicateId)> {
    predictions
        .iter()
        .filter_map(|(id, pred)| {
            let k = pred.probs.argmax();
            let threshold = theta.get(vocab.group(k));
            // θ = 1 means the group is never mined, even if c rounds to 1.
            (threshold < 1.0 && pred.confidence >= threshold).then_some((*id, k))
        })
        .collect()
}

/// Turn detected negatives into positives carrying their pseudo label
/// (tag `NegNoisy`); the enlarged positive set is the union of the original
/// positives and these samples.
pub fn merge_positive_set(dataset: &Dataset, detections: &[(SampleId, PredicateId)]) -> Result<Dataset> {
    let mut out = dataset.clone();
    let n_predicates = dataset.vocabulary().len();
    for &(id, pseudo) in detections {
        let i = dataset.position(id).ok_or(Error::UnknownId(id))?;
        if dataset.samples()[i].polarity != Polarity::Negative {
            return Err(Error::sample(id, "detection refers to a positive sample"));
        }
        if pseudo >= n_predicates {
            return Err(Error::sample(id, format!("pseudo label {pseudo} outside vocabulary")));
        }
        out.transition(i, PartitionTag::NegNoisy)?;
        let s = out.sample_mut(i);
        s.predicate = Some(pseudo);
        s.polarity = Polarity::Positive;
        out.state_mut(i).mined = true;
    }
    Ok(out)
}

/// Everything the negative-mining stage produces.
#[derive(Debug, Clone)]
pub struct NegNsdOutcome {
    pub classifier: ConfidenceClassifier,
    pub predictions: Vec<(SampleId, Prediction)>,
    pub detections: Vec<(SampleId, PredicateId)>,
    pub dataset: Dataset,
}

/// Predictions for every negative sample still tagged `NegClean`.
pub fn predict_negatives(classifier: &ConfidenceClassifier, dataset: &Dataset) -> Result<Vec<(SampleId, Prediction)>> {
    dataset
        .iter()
        .filter(|(s, st)| s.polarity == Polarity::Negative && st.tag == PartitionTag::NegClean)
        .map(|(s, _)| Ok((s.id, predict(classifier, s)?)))
        .collect()
}

/// Train on the positives, score the negatives, mine and merge.
pub fn run(dataset: &Dataset, config: &NegNsdConfig) -> Result<NegNsdOutcome> {
    let examples: Vec<_> = positive_examples(dataset)
        .into_iter()
        .filter(|e| e.feature.len() == dataset.dim())
        .collect();
    let classifier = train_classifier(&examples, dataset.vocabulary().len(), config)?;
    let predictions = predict_negatives(&classifier, dataset)?;
    let detections = detect_negatives(&predictions, dataset.vocabulary(), &config.theta);
    let merged = merge_positive_set(dataset, &detections)?;
    Ok(NegNsdOutcome {
        classifier,
        predictions,
        detections,
        dataset: merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{neg, pos, vocab};
    use crate::vocab::GroupThresholds;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn adjust_identities() {
        let p = dist(&[0.8, 0.2]);
        let y = dist(&[0.0, 1.0]);
        assert_eq!(adjust_probs(&p, 1.0, &y).unwrap(), p);
        assert_eq!(adjust_probs(&p, 0.0, &y).unwrap(), y);
        let half = adjust_probs(&p, 0.5, &y).unwrap();
        assert!((half.as_slice()[0] - 0.4).abs() < 1e-15);
        assert!((half.as_slice()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn adjust_rejects_bad_confidence() {
        let p = dist(&[0.5, 0.5]);
        assert!(adjust_probs(&p, 1.5, &p).is_err());
    }

    #[test]
    fn loss_values() {
        let y = dist(&[1.0, 0.0]);
        let w = [2.0, 1.0];
        // Perfect prediction: clamped log(1 − 1e-7) contributes ~2e-7.
        let l = neg_nsd_loss(&y, &y, 1.0, &w, 0.1).unwrap();
        assert!(l.abs() < 1e-6);
        let p = dist(&[0.5, 0.5]);
        let l = neg_nsd_loss(&p, &y, 1.0, &w, 0.1).unwrap();
        assert!((l - 1.386_294_361_119_890_6).abs() < 1e-5);
        let l = neg_nsd_loss(&p, &y, 0.5, &w, 0.1).unwrap();
        assert!((l - 1.455_609_079_175_864).abs() < 1e-5);
    }

    #[test]
    fn zero_confidence_is_finite_under_clamp() {
        let y = dist(&[1.0, 0.0]);
        let l = neg_nsd_loss(&y, &y, 0.0, &[1.0, 1.0], 0.1).unwrap();
        assert!(l.is_finite());
        assert!(neg_nsd_loss(&y, &y, f64::NAN, &[1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn inverse_frequency_normalised() {
        let w = inverse_frequency_weights(&[1, 3, 0]);
        assert!((w.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!((w[0] / w[1] - 3.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn zero_model_predicts_uniform_half_confidence() {
        let m = ConfidenceClassifier::zeros(3, 4);
        let p = m.predict_features(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.confidence, 0.5);
        for &v in p.probs.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(m.predict_features(&[1.0]).is_err());
    }

    #[test]
    fn hand_logits() {
        // One feature, bias row gives logits [2, 0]; confidence logit 0.
        let m = ConfidenceClassifier::from_parts(1, 2, vec![0.0, 0.0, 2.0, 0.0], vec![0.0, 0.0]).unwrap();
        let p = m.predict_features(&[3.0]).unwrap();
        assert!((p.probs.as_slice()[0] - 0.8808).abs() < 1e-4);
        assert!((p.probs.as_slice()[1] - 0.1192).abs() < 1e-4);
        assert_eq!(p.confidence, 0.5);
    }

    fn two_blob_examples() -> Vec<(Vec<f64>, usize)> {
        let mut out = Vec::new();
        for i in 0..40 {
            let t = i as f64 * 0.05;
            out.push((vec![-2.0 + t, 1.0 - t], 0));
            out.push((vec![2.0 - t, -1.0 + t], 1));
        }
        out
    }

    #[test]
    fn training_descends_and_is_deterministic() {
        let data = two_blob_examples();
        let examples: Vec<_> = data
            .iter()
            .map(|(f, l)| LabeledFeature { feature: f, label: *l })
            .collect();
        let cfg = NegNsdConfig {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 11,
            ..NegNsdConfig::default()
        };
        let w = weights_for(&examples, 2, cfg.class_weighting);
        let before = mean_loss(&ConfidenceClassifier::zeros(2, 2), &examples, &w, cfg.lambda).unwrap();
        let m1 = train_classifier(&examples, 2, &cfg).unwrap();
        let m2 = train_classifier(&examples, 2, &cfg).unwrap();
        let after = mean_loss(&m1, &examples, &w, cfg.lambda).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert_eq!(m1, m2);
        assert_eq!(m1.predict_features(&[-2.0, 1.0]).unwrap().probs.argmax(), 0);
        assert_eq!(m1.predict_features(&[2.0, -1.0]).unwrap().probs.argmax(), 1);
    }

    #[test]
    fn empty_training_set_errors() {
        assert!(matches!(
            train_classifier(&[], 2, &NegNsdConfig::default()),
            Err(Error::Empty(_))
        ));
    }

    fn tail_vocab() -> PredicateVocabulary {
        // counts: head, body, tail under default thresholds
        PredicateVocabulary::new(
            vec!["on".to_string(), "has".to_string(), "riding".to_string()],
            vec![20_000, 800, 10],
            GroupThresholds::default(),
        )
        .unwrap()
    }

    fn pred(probs: &[f64], c: f64) -> Prediction {
        Prediction {
            probs: dist(probs),
            confidence: c,
        }
    }

    #[test]
    fn tail_threshold_boundary() {
        let v = tail_vocab();
        let theta = NegNsdConfig::default().theta;
        let preds = vec![
            (1, pred(&[0.1, 0.1, 0.8], 0.7)),
            (2, pred(&[0.1, 0.1, 0.8], 0.59)),
            (3, pred(&[0.1, 0.1, 0.8], 0.60)),
            (4, pred(&[0.8, 0.1, 0.1], 0.999)),
        ];
        assert_eq!(detect_negatives(&preds, &v, &theta), vec![(1, 2), (3, 2)]);
    }

    #[test]
    fn saturated_thresholds_detect_nothing() {
        let v = tail_vocab();
        let theta = GroupValues::new(1.0, 1.0, 1.0);
        let preds = vec![(1, pred(&[0.1, 0.1, 0.8], 0.999_999)), (2, pred(&[0.8, 0.1, 0.1], 1.0))];
        assert!(detect_negatives(&preds, &v, &theta).is_empty());
    }

    #[test]
    fn merge_counts_and_preserves_fields() {
        let v = vocab(&["on", "has"], &[5, 5]);
        let mut samples: Vec<_> = (0..100).map(|i| pos(i, i, ("a", "b"), 0, &[i as f64, 0.0])).collect();
        samples.extend((100..110).map(|i| neg(i, i, &[i as f64, 1.0])));
        let d = Dataset::new(v, samples).unwrap();
        let same = merge_positive_set(&d, &[]).unwrap();
        assert_eq!(same, d);
        let dets: Vec<_> = (100..105).map(|i| (i, 1)).collect();
        let m = merge_positive_set(&d, &dets).unwrap();
        assert_eq!(m.positives().count(), 105);
        let (s, st) = m.get(102).unwrap();
        assert_eq!(s.predicate, Some(1));
        assert_eq!(s.feature, d.get(102).unwrap().0.feature);
        assert_eq!(st.tag, PartitionTag::NegNoisy);
        assert!(st.mined);
        assert!(merge_positive_set(&d, &[(3, 1)]).is_err());
        assert!(matches!(
            merge_positive_set(&d, &[(999, 1)]),
            Err(Error::UnknownId(999))
        ));
    }

    proptest! {
        #[test]
        fn adjusted_is_distribution(raw in proptest::collection::vec(0.01f64..1.0, 2..8), c in 0.0f64..=1.0, k in 0usize..8) {
            let s: f64 = raw.iter().sum();
            let p = Distribution::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let y = Distribution::one_hot(raw.len(), k % raw.len());
            let a = adjust_probs(&p, c, &y).unwrap();
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.as_slice().iter().all(|&v| v >= 0.0));
            let l = neg_nsd_loss(&a, &y, c, &vec![1.0; raw.len()], 0.1).unwrap();
            prop_assert!(l >= 0.0);
        }

        #[test]
        fn detection_monotone(conf in 0.0f64..1.0, bump in 0.0f64..0.5, tighten in 0.0f64..0.5) {
            let v = tail_vocab();
            let theta = NegNsdConfig::default().theta;
            let base = vec![(1, pred(&[0.1, 0.1, 0.8], conf))];
            let raised = vec![(1, pred(&[0.1, 0.1, 0.8], (conf + bump).min(1.0)))];
            let d0 = detect_negatives(&base, &v, &theta);
            let d1 = detect_negatives(&raised, &v, &theta);
            prop_assert!(d1.len() >= d0.len());
            let tighter = GroupValues::new(1.0, 1.0, (theta.tail + tighten).min(1.0));
            prop_assert!(detect_negatives(&base, &v, &tighter).len() <= d0.len());
        }
    }
}
