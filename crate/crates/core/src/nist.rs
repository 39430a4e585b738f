//! Multi-teacher distillation targets.
//!
//! Two teachers, one favouring head predicates and one favouring tail
//! predicates, are fused per sample. Each teacher's bias score is the
//! reciprocal of its cross-entropy against the ground truth; the teacher
//! that fits the ground truth more closely gets the *smaller* weight.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, SampleId};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::math::{self, PROB_EPS};
use crate::neg_nsd::ConfidenceClassifier;
use crate::vocab::{CategoryGroup, PredicateId, PredicateVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Constant 0.5 / 0.5 on the raw teacher outputs.
    Fixed,
    /// Bias-score weights on the raw teacher outputs.
    Adapt,
    /// Ground-truth substitution by group, then bias-score weights.
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub epsilon: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: FusionMode::Group,
            epsilon: PROB_EPS,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-3) {
            return Err(Error::Config(format!("epsilon = {} outside (0, 1e-3]", self.epsilon)));
        }
        Ok(())
    }
}

fn same_len(a: &Distribution, b: &Distribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `1 / XE(p_gt, p_teacher)` with the teacher clamped to `[ε, 1 − ε]`.
pub fn bias_score(p_gt: &Distribution, p_teacher: &Distribution, epsilon: f64) -> Result<f64> {
    same_len(p_gt, p_teacher)?;
    let xe: f64 = p_gt
        .as_slice()
        .iter()
        .zip(p_teacher.as_slice())
        .filter(|(&g, _)| g != 0.0)
        .map(|(&g, &t)| -g * math::ln(math::clamp_prob(t, epsilon)))
        .sum();
    if !(xe > 0.0) {
        return Err(Error::NonFinite(format!("cross-entropy {xe} is not positive")));
    }
    Ok(1.0 / xe)
}

/// `(w_head, w_tail) = (s_tail, s_head) / (s_head + s_tail)`.
pub fn fusion_weights(s_head: f64, s_tail: f64) -> Result<(f64, f64)> {
    if !(s_head > 0.0 && s_tail > 0.0) || !(s_head + s_tail).is_finite() {
        return Err(Error::InvalidInput(format!(
            "bias scores ({s_head}, {s_tail}) must be positive"
        )));
    }
    let total = s_head + s_tail;
    Ok((s_tail / total, s_head / total))
}

/// Convex combination `w_head·p_head + w_tail·p_tail`.
pub fn fuse(p_head: &Distribution, p_tail: &Distribution, weights: (f64, f64)) -> Result<Distribution> {
    same_len(p_head, p_tail)?;
    let (wh, wt) = weights;
    if !(wh >= 0.0 && wt >= 0.0) || (wh + wt - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("weights ({wh}, {wt}) are not convex")));
    }
    let out = p_head
        .as_slice()
        .iter()
        .zip(p_tail.as_slice())
        .map(|(&h, &t)| (wh * h + wt * t).clamp(0.0, 1.0))
        .collect();
    Ok(Distribution::from_computed(out))
}

/// Replace teacher outputs by the ground truth depending on the ground
/// truth's group: head → head teacher, body → both, tail → tail teacher.
pub fn group_substitute(
    gt_group: CategoryGroup,
    p_gt: &Distribution,
    p_head: &Distribution,
    p_tail: &Distribution,
) -> (Distribution, Distribution) {
    match gt_group {
        CategoryGroup::Head => (p_gt.clone(), p_tail.clone()),
        CategoryGroup::Body => (p_gt.clone(), p_gt.clone()),
        CategoryGroup::Tail => (p_head.clone(), p_gt.clone()),
    }
}

/// `KL(p_s ‖ p_t) = Σ p_s,i · log(p_s,i / p_t,i)`, student first, both
/// clamped inside the log.
pub fn kd_loss(p_s: &Distribution, p_t: &Distribution, epsilon: f64) -> Result<f64> {
    same_len(p_s, p_t)?;
    Ok(p_s
        .as_slice()
        .iter()
        .zip(p_t.as_slice())
        .filter(|(&s, _)| s != 0.0)
        .map(|(&s, &t)| s * (math::ln(math::clamp_prob(s, epsilon)) - math::ln(math::clamp_prob(t, epsilon))))
        .sum())
}

/// Fusion target for one sample.
pub fn fuse_sample(
    gt: PredicateId,
    gt_group: CategoryGroup,
    p_head: &Distribution,
    p_tail: &Distribution,
    config: &FusionConfig,
) -> Result<Distribution> {
    let p_gt = Distribution::one_hot(p_head.len(), gt);
    let (h, t) = match config.mode {
        FusionMode::Fixed => return fuse(p_head, p_tail, (0.5, 0.5)),
        FusionMode::Adapt => (p_head.clone(), p_tail.clone()),
        FusionMode::Group => group_substitute(gt_group, &p_gt, p_head, p_tail),
    };
    let s_head = bias_score(&p_gt, &h, config.epsilon)?;
    let s_tail = bias_score(&p_gt, &t, config.epsilon)?;
    fuse(&h, &t, fusion_weights(s_head, s_tail)?)
}

/// Both teachers' outputs and the ground truth, aligned per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutputs {
    pub ids: Vec<SampleId>,
    pub gt: Vec<PredicateId>,
    pub head: Vec<Distribution>,
    pub tail: Vec<Distribution>,
}

impl TeacherOutputs {
    /// Align teacher sidecars with the ground-truth labels of `dataset`.
    /// Both teachers must list the same ids in the same order, each a
    /// labelled sample of the dataset.
    pub fn align(
        dataset: &Dataset,
        head: Vec<(SampleId, Distribution)>,
        tail: Vec<(SampleId, Distribution)>,
    ) -> Result<Self> {
        if head.len() != tail.len() {
            return Err(Error::Structural(format!(
                "teacher outputs have {} and {} rows",
                head.len(),
                tail.len()
            )));
        }
        let n_classes = dataset.vocabulary().len();
        let mut out = TeacherOutputs {
            ids: Vec::with_capacity(head.len()),
            gt: Vec::with_capacity(head.len()),
            head: Vec::with_capacity(head.len()),
            tail: Vec::with_capacity(head.len()),
        };
        for ((hid, hp), (tid, tp)) in head.into_iter().zip(tail) {
            if hid != tid {
                return Err(Error::Structural(format!("teacher rows misaligned: id {hid} vs {tid}")));
            }
            let i = dataset.position(hid).ok_or(Error::UnknownId(hid))?;
            let gt = dataset
                .effective_label(i)
                .ok_or_else(|| Error::sample(hid, "no ground-truth predicate"))?;
            for p in [&hp, &tp] {
                if p.len() != n_classes {
                    return Err(Error::sample(
                        hid,
                        format!("teacher distribution has {} entries", p.len()),
                    ));
                }
            }
            out.ids.push(hid);
            out.gt.push(gt);
            out.head.push(hp);
            out.tail.push(tp);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Distillation targets for every aligned sample, in input order.
pub fn fuse_dataset(
    teachers: &TeacherOutputs,
    vocab: &PredicateVocabulary,
    config: &FusionConfig,
) -> Result<Vec<(SampleId, Distribution)>> {
    config.validate()?;
    (0..teachers.len())
        .map(|i| {
            let gt = teachers.gt[i];
            if gt >= vocab.len() {
                return Err(Error::sample(
                    teachers.ids[i],
                    format!("ground truth {gt} outside vocabulary"),
                ));
            }
            let target = fuse_sample(gt, vocab.group(gt), &teachers.head[i], &teachers.tail[i], config)?;
            Ok((teachers.ids[i], target))
        })
        .collect()
}

/// Hyperparameters for fitting a student classifier to fused targets.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            learning_rate: 0.01,
            epochs: 40,
            batch_size: 64,
            seed: 0,
            epsilon: PROB_EPS,
        }
    }
}

/// Distillation loss of the classification branch and its gradient with
/// respect to the class weights (confidence weights are not used).
pub fn kd_loss_and_gradient(
    model: &ConfidenceClassifier,
    x: &[f64],
    target: &Distribution,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    let (z, _) = model.logits(x)?;
    if target.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            found: target.len(),
        });
    }
    let p = math::softmax(&z);
    let mut loss = 0.0;
    // d loss / d p_i
    let g: Vec<f64> = p
        .iter()
        .zip(target.as_slice())
        .map(|(&pi, &ti)| {
            let cp = math::clamp_prob(pi, epsilon);
            let lr = math::ln(cp) - math::ln(math::clamp_prob(ti, epsilon));
            loss += pi * lr;
            let inner = if pi > epsilon && pi < 1.0 - epsilon { 1.0 } else { 0.0 };
            lr + inner
        })
        .collect();
    let mean_g: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
    let dz: Vec<f64> = p.iter().zip(&g).map(|(&pk, &gk)| pk * (gk - mean_g)).collect();
    let nc = z.len();
    let mut grad = vec![0.0; (x.len() + 1) * nc];
    for (r, &xr) in x.iter().chain(core::iter::once(&1.0)).enumerate() {
        for (gw, &d) in grad[r * nc..(r + 1) * nc].iter_mut().zip(&dz) {
            *gw = xr * d;
        }
    }
    Ok((loss, grad))
}

/// Fit the classification branch of a fresh classifier to `targets` by
/// mini-batch descent on the mean distillation loss.
pub fn train_student<F: AsRef<[f64]>>(
    features: &[F],
    targets: &[Distribution],
    n_classes: usize,
    config: &StudentConfig,
) -> Result<ConfidenceClassifier> {
    if features.len() != targets.len() {
        return Err(Error::Structural(format!(
            "{} features but {} targets",
            features.len(),
            targets.len()
        )));
    }
    let dim = features
        .first()
        .ok_or(Error::Empty("student training set"))?
        .as_ref()
        .len();
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config(
            "student batch_size and learning_rate must be positive".into(),
        ));
    }
    let mut model = ConfidenceClassifier::zeros(dim, n_classes);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut acc = vec![0.0; model.class_weights().len()];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (l, g) = kd_loss_and_gradient(&model, features[i].as_ref(), &targets[i], config.epsilon)?;
                batch_loss += l;
                acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("distillation loss diverged in epoch {epoch}")));
            }
            let step = config.learning_rate / batch.len() as f64;
            let (w, _) = model.params_mut();
            w.iter_mut().zip(&acc).for_each(|(w, g)| *w -= step * g);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{pos, vocab};
    use crate::vocab::GroupThresholds;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bias_score_values() {
        let gt = Distribution::one_hot(2, 0);
        let s = bias_score(&gt, &d(&[0.5, 0.5]), PROB_EPS).unwrap();
        assert!((s - core::f64::consts::LOG2_E).abs() < 1e-12);
        let perfect = bias_score(&gt, &gt, PROB_EPS).unwrap();
        assert!(perfect.is_finite() && perfect > 1e6);
        let s9 = bias_score(&gt, &d(&[0.9, 0.1]), PROB_EPS).unwrap();
        assert!((s9 - 9.491_221_581_029_903).abs() < 1e-9);
        assert!(s9 > s);
    }

    #[test]
    fn weights_and_fusion_example() {
        let (wh, wt) = fusion_weights(9.491_221_581_029_903, core::f64::consts::LOG2_E).unwrap();
        assert!((wh - 0.13195).abs() < 1e-5);
        assert!((wt - 0.86805).abs() < 1e-5);
        let pt = fuse(&d(&[0.9, 0.1]), &d(&[0.5, 0.5]), (wh, wt)).unwrap();
        assert!((pt.as_slice()[0] - 0.5528).abs() < 1e-4);
        assert!((pt.as_slice()[1] - 0.4472).abs() < 1e-4);
        assert_eq!(fusion_weights(2.0, 2.0).unwrap(), (0.5, 0.5));
        assert!(fusion_weights(0.0, 1.0).is_err());
    }

    #[test]
    fn fuse_boundaries() {
        let a = d(&[0.9, 0.1]);
        let b = d(&[0.2, 0.8]);
        assert_eq!(fuse(&a, &b, (1.0, 0.0)).unwrap(), a);
        assert_eq!(fuse(&a, &a, (0.3, 0.7)).unwrap().as_slice()[0], 0.9);
        assert!(fuse(&a, &b, (0.3, 0.3)).is_err());
    }

    #[test]
    fn substitution_by_group() {
        let gt = Distribution::one_hot(3, 2);
        let h = d(&[0.6, 0.3, 0.1]);
        let t = d(&[0.2, 0.2, 0.6]);
        assert_eq!(
            group_substitute(CategoryGroup::Head, &gt, &h, &t),
            (gt.clone(), t.clone())
        );
        assert_eq!(
            group_substitute(CategoryGroup::Body, &gt, &h, &t),
            (gt.clone(), gt.clone())
        );
        assert_eq!(
            group_substitute(CategoryGroup::Tail, &gt, &h, &t),
            (h.clone(), gt.clone())
        );
    }

    #[test]
    fn tail_sample_with_perfect_head_teacher() {
        let cfg = FusionConfig::default();
        let gt = 1;
        let h = Distribution::one_hot(2, gt);
        let t = d(&[0.3, 0.7]);
        let target = fuse_sample(gt, CategoryGroup::Tail, &h, &t, &cfg).unwrap();
        assert_eq!(target, h);
    }

    #[test]
    fn modes() {
        let h = d(&[0.9, 0.1]);
        let t = d(&[0.5, 0.5]);
        let fixed = fuse_sample(
            0,
            CategoryGroup::Head,
            &h,
            &t,
            &FusionConfig {
                mode: FusionMode::Fixed,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((fixed.as_slice()[0] - 0.7).abs() < 1e-15);
        let adapt = fuse_sample(
            0,
            CategoryGroup::Head,
            &h,
            &t,
            &FusionConfig {
                mode: FusionMode::Adapt,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((adapt.as_slice()[0] - 0.5528).abs() < 1e-4);
        let body = fuse_sample(0, CategoryGroup::Body, &h, &t, &FusionConfig::default()).unwrap();
        assert_eq!(body, Distribution::one_hot(2, 0));
    }

    #[test]
    fn kd_values() {
        let a = d(&[0.3, 0.7]);
        assert_eq!(kd_loss(&a, &a, PROB_EPS).unwrap(), 0.0);
        let l = kd_loss(&d(&[1.0, 0.0]), &d(&[0.5, 0.5]), PROB_EPS).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn dataset_fusion_alignment() {
        let v = PredicateVocabulary::new(
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
            vec![800, 900],
            GroupThresholds::default(),
        )
        .unwrap();
        let ds = Dataset::new(
            v.clone(),
            vec![pos(0, 0, ("x", "y"), 0, &[0.0]), pos(1, 0, ("x", "y"), 1, &[1.0])],
        )
        .unwrap();
        let head = vec![(0, d(&[0.9, 0.1])), (1, d(&[0.6, 0.4]))];
        let tail = vec![(0, d(&[0.5, 0.5])), (1, d(&[0.3, 0.7]))];
        let t = TeacherOutputs::align(&ds, head.clone(), tail.clone()).unwrap();
        let out = fuse_dataset(&t, &v, &FusionConfig::default()).unwrap();
        assert_eq!(out[0].1, Distribution::one_hot(2, 0));
        assert_eq!(out[1].1, Distribution::one_hot(2, 1));
        let swapped = vec![(1, d(&[0.5, 0.5])), (0, d(&[0.3, 0.7]))];
        assert!(TeacherOutputs::align(&ds, head.clone(), swapped).is_err());
        assert!(TeacherOutputs::align(&ds, vec![(7, d(&[0.5, 0.5]))], vec![(7, d(&[0.5, 0.5]))]).is_err());
        let _ = vocab(&["z"], &[1]);
    }

    #[test]
    fn kd_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..20 {
            let (dim, nc) = (3, 4);
            let w: Vec<f64> = (0..(dim + 1) * nc).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = ConfidenceClassifier::from_parts(dim, nc, w.clone(), vec![0.0; dim + 1]).unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let raw: Vec<f64> = (0..nc).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let t = Distribution::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let (_, g) = kd_loss_and_gradient(&m, &x, &t, PROB_EPS).unwrap();
            for k in 0..w.len() {
                let h = 1e-5;
                let mut wp = w.clone();
                wp[k] += h;
                let mut wm = w.clone();
                wm[k] -= h;
                let lp = kd_loss_and_gradient(
                    &ConfidenceClassifier::from_parts(dim, nc, wp, vec![0.0; dim + 1]).unwrap(),
                    &x,
                    &t,
                    PROB_EPS,
                )
                .unwrap()
                .0;
                let lm = kd_loss_and_gradient(
                    &ConfidenceClassifier::from_parts(dim, nc, wm, vec![0.0; dim + 1]).unwrap(),
                    &x,
                    &t,
                    PROB_EPS,
                )
                .unwrap()
                .0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn student_fits_targets() {
        let feats: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 }, (i as f64) * 0.01])
            .collect();
        let targets: Vec<Distribution> = (0..40)
            .map(|i| if i % 2 == 0 { d(&[0.8, 0.2]) } else { d(&[0.2, 0.8]) })
            .collect();
        let cfg = StudentConfig {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: 8,
            ..Default::default()
        };
        let m = train_student(&feats, &targets, 2, &cfg).unwrap();
        let p = m.predict_features(&[-1.0, 0.2]).unwrap();
        assert!((p.probs.as_slice()[0] - 0.8).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn weights_convex_and_swap(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let (wh, wt) = fusion_weights(a, b).unwrap();
            prop_assert!((wh + wt - 1.0).abs() <= f64::EPSILON);
            prop_assert!(wh > 0.0 && wh < 1.0 && wt > 0.0 && wt < 1.0);
            let (wh2, wt2) = fusion_weights(b, a).unwrap();
            prop_assert_eq!(wh, wt2);
            prop_assert_eq!(wt, wh2);
        }

        #[test]
        fn kd_non_negative(a in proptest::collection::vec(0.0f64..1.0, 4), b in proptest::collection::vec(0.01f64..1.0, 4)) {
            let sa: f64 = a.iter().sum();
            prop_assume!(sa > 0.0);
            let sb: f64 = b.iter().sum();
            let p = Distribution::new(a.iter().map(|v| v / sa).collect()).unwrap();
            let q = Distribution::new(b.iter().map(|v| v / sb).collect()).unwrap();
            prop_assert!(kd_loss(&p, &q, PROB_EPS).unwrap() >= -1e-6);
            prop_assert!(fuse(&p, &q, (0.25, 0.75)).unwrap().as_slice().iter().sum::<f64>() - 1.0 < 1e-9);
        }
    }
}
