//! Financial-literacy regressor: rare-target oversampling of the labeled set
//! followed by co-training of two k-NN regressors with different Minkowski
//! orders over an unlabeled pool.
//!
//! Model file layout (little-endian): `"FLKN" | version u16`, then for each of
//! the two learners `k u32 | p f64 | n u32 | d u32 | xs f64 x n*d | ys f64 x n`.

use std::collections::HashSet;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::knn::{nearest, KnnRegressor};

pub const FL_MAGIC: &[u8; 4] = b"FLKN";
pub const FL_VERSION: u16 = 1;

/// How an example's rarity is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relevance {
    /// `|y - median| / max |y - median|`.
    MedianDeviation,
    /// Logistic in the standardized deviation from the median with the given steepness.
    Sigmoid { steepness: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmognConfig {
    pub relevance_threshold: f64,
    pub k_neighbors: usize,
    pub gaussian_perturbation: f64,
    pub oversample_ratio: f64,
    pub relevance: Relevance,
    pub seed: u64,
}

impl Default for SmognConfig {
    fn default() -> Self {
        SmognConfig {
            relevance_threshold: 0.5,
            k_neighbors: 5,
            gaussian_perturbation: 0.05,
            oversample_ratio: 1.0,
            relevance: Relevance::MedianDeviation,
            seed: 0,
        }
    }
}

impl SmognConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relevance_threshold > 0.0 && self.relevance_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("relevance_threshold {} not in (0,1)", self.relevance_threshold)));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.gaussian_perturbation >= 0.0) || !(self.oversample_ratio > 0.0) {
            return Err(Error::InvalidConfig("gaussian_perturbation >= 0 and oversample_ratio > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoregConfig {
    pub k1: usize,
    pub k2: usize,
    pub p1: f64,
    pub p2: f64,
    pub max_iterations: usize,
    pub pool_size: usize,
    pub batch_per_iter: usize,
    pub seed: u64,
}

impl Default for CoregConfig {
    fn default() -> Self {
        CoregConfig { k1: 3, k2: 3, p1: 2.0, p2: 5.0, max_iterations: 50, pool_size: 100, batch_per_iter: 1, seed: 0 }
    }
}

impl CoregConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.max_iterations == 0 || self.pool_size == 0 || self.batch_per_iter == 0 {
            return Err(Error::InvalidConfig("COREG counts must be >= 1".into()));
        }
        if !(self.p1 >= 1.0 && self.p2 >= 1.0) {
            return Err(Error::InvalidConfig("Minkowski orders must be >= 1".into()));
        }
        if self.k1 == self.k2 && self.p1 == self.p2 {
            return Err(Error::InvalidConfig("the two learners must differ in k or p".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOrigin {
    Original(usize),
    /// `x = x_a + t (x_b - x_a)`.
    Interpolated { a: usize, b: usize, t: f64 },
    Perturbed { a: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmognOutput {
    pub samples: Vec<(Vec<f64>, f64)>,
    pub origins: Vec<SampleOrigin>,
    pub relevance: Vec<f64>,
    pub rare: Vec<usize>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn relevance_scores(targets: &[f64], kind: Relevance) -> Vec<f64> {
    let med = median(targets);
    let dev: Vec<f64> = targets.iter().map(|y| (y - med).abs()).collect();
    match kind {
        Relevance::MedianDeviation => {
            let max = dev.iter().copied().fold(0.0, f64::max);
            dev.iter().map(|d| if max > 0.0 { d / max } else { 0.0 }).collect()
        }
        Relevance::Sigmoid { steepness } => {
            let n = targets.len() as f64;
            let mean = targets.iter().sum::<f64>() / n;
            let sd = (targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd == 0.0 {
                return vec![0.0; targets.len()];
            }
            // Zero deviation maps to 0, large deviations approach 1.
            dev.iter().map(|d| 2.0 / (1.0 + (-steepness * d / sd).exp()) - 1.0).collect()
        }
    }
}

fn feature_std(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len() as f64;
    let d = xs[0].len();
    (0..d)
        .map(|j| {
            let m = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            (xs.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Oversamples the rare-target region of a labeled regression set.
///
/// Every input example is kept unchanged at the front of the output.
pub fn smogn_resample(labeled: &[(Vec<f64>, f64)], cfg: &SmognConfig) -> Result<SmognOutput> {
    cfg.validate()?;
    if labeled.len() < cfg.k_neighbors + 1 {
        return Err(Error::TooFewExamples(format!(
            "{} labeled examples, need at least k_neighbors + 1 = {}",
            labeled.len(),
            cfg.k_neighbors + 1
        )));
    }
    if let Some(&(_, y)) = labeled.iter().find(|(_, y)| !(0.0..=1.0).contains(y)) {
        return Err(Error::TargetOutOfRange(y));
    }
    let xs: Vec<Vec<f64>> = labeled.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<f64> = labeled.iter().map(|(_, y)| *y).collect();
    let relevance = relevance_scores(&ys, cfg.relevance);
    let rare: Vec<usize> = (0..ys.len()).filter(|&i| relevance[i] > cfg.relevance_threshold).collect();

    let mut samples = labeled.to_vec();
    let mut origins: Vec<SampleOrigin> = (0..labeled.len()).map(SampleOrigin::Original).collect();
    if rare.is_empty() {
        return Ok(SmognOutput { samples, origins, relevance, rare });
    }

    let rare_set: HashSet<usize> = rare.iter().copied().collect();
    let n_new = (cfg.oversample_ratio * rare.len() as f64).ceil() as usize;
    let stds = feature_std(&xs);
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let y_std = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rare_partners: Vec<Vec<usize>> = rare
        .iter()
        .map(|&a| {
            nearest(&xs, &xs[a], cfg.k_neighbors, 2.0, Some(a))
                .into_iter()
                .map(|(_, j)| j)
                .filter(|j| rare_set.contains(j))
                .collect()
        })
        .collect();

    for s in 0..n_new {
        let slot = s % rare.len();
        let a = rare[slot];
        let partners = &rare_partners[slot];
        if let Some(&b) = partners.choose(&mut rng) {
            let t: f64 = rng.gen_range(0.0..=1.0);
            let x: Vec<f64> = xs[a].iter().zip(&xs[b]).map(|(xa, xb)| xa + t * (xb - xa)).collect();
            // Inverse-distance weighting of the parents; on the segment this is (1-t) y_a + t y_b.
            let y = (1.0 - t) * ys[a] + t * ys[b];
            samples.push((x, y.clamp(ys[a].min(ys[b]), ys[a].max(ys[b]))));
            origins.push(SampleOrigin::Interpolated { a, b, t });
        } else {
            let x: Vec<f64> = xs[a]
                .iter()
                .zip(&stds)
                .map(|(v, sd)| {
                    let scale = cfg.gaussian_perturbation * sd;
                    if scale > 0.0 {
                        v + Normal::new(0.0, scale).expect("finite").sample(&mut rng)
                    } else {
                        *v
                    }
                })
                .collect();
            let scale = cfg.gaussian_perturbation * y_std;
            let y = if scale > 0.0 { ys[a] + Normal::new(0.0, scale).expect("finite").sample(&mut rng) } else { ys[a] };
            samples.push((x, y.clamp(0.0, 1.0)));
            origins.push(SampleOrigin::Perturbed { a });
        }
    }
    Ok(SmognOutput { samples, origins, relevance, rare })
}

/// One accepted pseudo-label.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub iteration: usize,
    /// Learner (0 or 1) that produced the label; the point joins the other learner's set.
    pub learner: usize,
    pub unlabeled_index: usize,
    pub label: f64,
    /// Reduction of squared error on the selecting learner's neighbourhood.
    pub error_reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlModel {
    pub learners: [KnnRegressor; 2],
    pub transcript: Vec<PseudoLabel>,
}

impl FlModel {
    pub fn dim(&self) -> usize {
        self.learners[0].dim()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(FL_MAGIC)?;
        w.write_u16::<LittleEndian>(FL_VERSION)?;
        for l in &self.learners {
            w.write_u32::<LittleEndian>(l.k as u32)?;
            w.write_f64::<LittleEndian>(l.p)?;
            w.write_u32::<LittleEndian>(l.len() as u32)?;
            w.write_u32::<LittleEndian>(l.dim() as u32)?;
            for v in l.xs.iter().flatten().chain(&l.ys) {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FL_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected FLKN")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != FL_VERSION {
            return Err(Error::Format(format!("unsupported FLKN version {version}")));
        }
        let mut read_learner = || -> Result<KnnRegressor> {
            let k = r.read_u32::<LittleEndian>()? as usize;
            let p = r.read_f64::<LittleEndian>()?;
            let n = r.read_u32::<LittleEndian>()? as usize;
            let d = r.read_u32::<LittleEndian>()? as usize;
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                xs.push((0..d).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?);
            }
            let ys = (0..n).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
            KnnRegressor::fit(xs, ys, k, p).map_err(|e| Error::Format(e.to_string()))
        };
        let a = read_learner()?;
        let b = read_learner()?;
        if a.dim() != b.dim() {
            return Err(Error::Format("learner dimensions differ".into()));
        }
        Ok(FlModel { learners: [a, b], transcript: Vec::new() })
    }
}

/// Leave-one-out k-NN prediction at training point `i`, optionally with an extra candidate point.
fn loo_prediction(l: &KnnRegressor, i: usize, extra: Option<(&[f64], f64)>) -> f64 {
    let mut nb: Vec<(f64, f64)> = l
        .neighbors(&l.xs[i], Some(i))
        .into_iter()
        .map(|(d, j)| (d, l.ys[j]))
        .collect();
    if let Some((x, y)) = extra {
        let d = crate::knn::minkowski_pow(x, &l.xs[i], l.p);
        // The candidate sorts after existing points at equal distance.
        let pos = nb.partition_point(|&(bd, _)| bd <= d);
        if pos < l.k {
            nb.insert(pos, (d, y));
            nb.truncate(l.k);
        }
    }
    nb.iter().map(|&(_, y)| y).sum::<f64>() / nb.len() as f64
}

/// Squared-error reduction on the candidate's labeled neighbourhood if `(x, y)` were added.
fn error_reduction(l: &KnnRegressor, x: &[f64], y: f64) -> f64 {
    l.neighbors(x, None)
        .into_iter()
        .map(|(_, i)| {
            let before = loo_prediction(l, i, None);
            let after = loo_prediction(l, i, Some((x, y)));
            (l.ys[i] - before).powi(2) - (l.ys[i] - after).powi(2)
        })
        .sum()
}

pub fn coreg_train(
    labeled: &[(Vec<f64>, f64)],
    unlabeled: &[Vec<f64>],
    smogn: &SmognConfig,
    cfg: &CoregConfig,
) -> Result<FlModel> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    cfg.validate()?;
    let dim = labeled[0].0.len();
    if let Some(x) = labeled.iter().map(|(x, _)| x).chain(unlabeled).find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    let augmented = if labeled.len() > smogn.k_neighbors {
        smogn_resample(labeled, smogn)?.samples
    } else {
        // Too few labels to find neighbours; train on what we have.
        if let Some(&(_, y)) = labeled.iter().find(|(_, y)| !(0.0..=1.0).contains(y)) {
            return Err(Error::TargetOutOfRange(y));
        }
        labeled.to_vec()
    };
    let xs: Vec<Vec<f64>> = augmented.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<f64> = augmented.iter().map(|(_, y)| *y).collect();
    let mut learners = [
        KnnRegressor::fit(xs.clone(), ys.clone(), cfg.k1, cfg.p1)?,
        KnnRegressor::fit(xs, ys, cfg.k2, cfg.p2)?,
    ];
    let mut transcript = Vec::new();
    if unlabeled.is_empty() {
        return Ok(FlModel { learners, transcript });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut remaining: Vec<usize> = (0..unlabeled.len()).collect();
    remaining.shuffle(&mut rng);
    let mut pool: Vec<usize> = remaining.split_off(remaining.len().saturating_sub(cfg.pool_size));

    for iteration in 0..cfg.max_iterations {
        let mut picks: [Vec<(usize, f64, f64)>; 2] = [Vec::new(), Vec::new()];
        for (j, learner) in learners.iter().enumerate() {
            let mut scored: Vec<(usize, f64, f64)> = pool
                .iter()
                .map(|&u| {
                    let x = &unlabeled[u];
                    let y = learner.predict(x).expect("dimension checked");
                    (u, y, error_reduction(learner, x, y))
                })
                .filter(|&(_, _, delta)| delta > 0.0)
                .collect();
            scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            scored.truncate(cfg.batch_per_iter);
            picks[j] = scored;
        }
        if picks.iter().all(Vec::is_empty) {
            break;
        }
        let mut taken = HashSet::new();
        for (j, chosen) in picks.iter().enumerate() {
            for &(u, y, delta) in chosen {
                learners[1 - j].push(unlabeled[u].clone(), y);
                taken.insert(u);
                transcript.push(PseudoLabel { iteration, learner: j, unlabeled_index: u, label: y, error_reduction: delta });
            }
        }
        pool.retain(|u| !taken.contains(u));
        while pool.len() < cfg.pool_size {
            match remaining.pop() {
                Some(u) => pool.push(u),
                None => break,
            }
        }
        if pool.is_empty() {
            break;
        }
    }
    Ok(FlModel { learners, transcript })
}

pub fn predict_fl(model: &FlModel, features: &[f64]) -> Result<f64> {
    let a = model.learners[0].predict(features)?;
    let b = model.learners[1].predict(features)?;
    Ok((0.5 * (a + b)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled_grid(n: usize) -> Vec<(Vec<f64>, f64)> {
        (0..n).map(|i| {
            let x = i as f64 / n as f64;
            (vec![x, (3.0 * x).sin()], (0.5 + 0.45 * (6.0 * x).sin()).clamp(0.0, 1.0))
        }).collect()
    }

    #[test]
    fn no_rare_examples_means_no_change() {
        let data: Vec<(Vec<f64>, f64)> = (0..10).map(|i| (vec![i as f64], 0.5)).collect();
        let out = smogn_resample(&data, &SmognConfig::default()).unwrap();
        assert_eq!(out.samples, data);
    }

    #[test]
    fn interpolation_between_two_rare_parents() {
        let mut data: Vec<(Vec<f64>, f64)> = (0..6).map(|i| (vec![5.0 + i as f64, 5.0], 0.5)).collect();
        data.push((vec![0.0, 0.0], 0.9));
        data.push((vec![1.0, 1.0], 1.0));
        let cfg = SmognConfig { relevance_threshold: 0.3, k_neighbors: 1, oversample_ratio: 3.0, ..Default::default() };
        let out = smogn_resample(&data, &cfg).unwrap();
        assert_eq!(out.rare, vec![6, 7]);
        assert_eq!(out.samples.len(), data.len() + 6);
        for ((x, y), o) in out.samples.iter().zip(&out.origins).skip(data.len()) {
            let SampleOrigin::Interpolated { a, b, t } = *o else { panic!("expected interpolation, got {o:?}") };
            let (pa, pb) = (&data[a].0, &data[b].0);
            for j in 0..2 {
                assert!((x[j] - (pa[j] + t * (pb[j] - pa[j]))).abs() < 1e-12);
            }
            assert!((0.9..=1.0).contains(y));
        }
    }

    #[test]
    fn isolated_rare_point_is_perturbed() {
        let mut data: Vec<(Vec<f64>, f64)> = (0..8).map(|i| (vec![i as f64 * 0.1], 0.5)).collect();
        data.push((vec![50.0], 0.0));
        let cfg = SmognConfig { k_neighbors: 2, ..Default::default() };
        let out = smogn_resample(&data, &cfg).unwrap();
        assert_eq!(out.origins[9], SampleOrigin::Perturbed { a: 8 });
        assert!((0.0..=1.0).contains(&out.samples[9].1));
    }

    #[test]
    fn skewed_targets_gain_rare_mass() {
        let data: Vec<(Vec<f64>, f64)> = (0..100).map(|i| {
            let y = if i % 5 == 0 { if i % 10 == 0 { 0.05 } else { 0.95 } } else { 0.5 + (i % 7) as f64 * 0.01 };
            (vec![i as f64 * 0.01, y * 3.0], y)
        }).collect();
        let rare_count = |s: &[(Vec<f64>, f64)]| s.iter().filter(|(_, y)| (*y - 0.5).abs() > 0.3).count();
        let out = smogn_resample(&data, &SmognConfig::default()).unwrap();
        assert!(rare_count(&out.samples) > rare_count(&data));
        assert_eq!(rare_count(&data), 20);
    }

    #[test]
    fn smogn_errors() {
        let data = vec![(vec![0.0], 0.2), (vec![1.0], 0.4)];
        assert!(matches!(smogn_resample(&data, &SmognConfig::default()), Err(Error::TooFewExamples(_))));
        let bad: Vec<_> = (0..8).map(|i| (vec![i as f64], if i == 3 { 1.2 } else { 0.5 })).collect();
        assert!(matches!(smogn_resample(&bad, &SmognConfig::default()), Err(Error::TargetOutOfRange(_))));
    }

    #[test]
    fn sigmoid_relevance_is_monotone() {
        let ys = [0.1, 0.3, 0.5, 0.5, 0.8, 0.95];
        let r = relevance_scores(&ys, Relevance::Sigmoid { steepness: 2.0 });
        assert!(r[2] == 0.0 && r[0] > r[1] && r[5] > r[4]);
        assert!(r.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn empty_pool_gives_plain_learners() {
        let data = labeled_grid(30);
        let smogn = SmognConfig::default();
        let model = coreg_train(&data, &[], &smogn, &CoregConfig::default()).unwrap();
        let aug = smogn_resample(&data, &smogn).unwrap().samples;
        let xs: Vec<_> = aug.iter().map(|s| s.0.clone()).collect();
        let ys: Vec<_> = aug.iter().map(|s| s.1).collect();
        let a = KnnRegressor::fit(xs.clone(), ys.clone(), 3, 2.0).unwrap();
        let b = KnnRegressor::fit(xs, ys, 3, 5.0).unwrap();
        assert_eq!(model.learners, [a.clone(), b.clone()]);
        for q in [[0.1, 0.2], [0.77, -0.3]] {
            let expect = (0.5 * (a.predict(&q).unwrap() + b.predict(&q).unwrap())).clamp(0.0, 1.0);
            assert_eq!(predict_fl(&model, &q).unwrap(), expect);
        }
    }

    #[test]
    fn transcript_is_deterministic_and_monotone() {
        let data = labeled_grid(25);
        let unlabeled: Vec<Vec<f64>> = (0..60).map(|i| {
            let x = (i as f64 + 0.5) / 60.0;
            vec![x, (3.0 * x).sin()]
        }).collect();
        let cfg = CoregConfig { max_iterations: 10, pool_size: 20, batch_per_iter: 2, seed: 4, ..Default::default() };
        let a = coreg_train(&data, &unlabeled, &SmognConfig::default(), &cfg).unwrap();
        let b = coreg_train(&data, &unlabeled, &SmognConfig::default(), &cfg).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert!(!a.transcript.is_empty());
        assert!(a.transcript.iter().all(|p| p.error_reduction > 0.0));
        let unique: HashSet<_> = a.transcript.iter().map(|p| (p.learner, p.unlabeled_index)).collect();
        assert_eq!(unique.len(), a.transcript.len());
    }

    #[test]
    fn identity_and_tie_break() {
        let data = [(vec![0.0, 0.0], 0.2), (vec![2.0, 0.0], 0.8), (vec![5.0, 5.0], 0.4)];
        let learners = [
            KnnRegressor::fit(data.iter().map(|d| d.0.clone()).collect(), data.iter().map(|d| d.1).collect(), 1, 2.0).unwrap(),
            KnnRegressor::fit(data.iter().map(|d| d.0.clone()).collect(), data.iter().map(|d| d.1).collect(), 1, 5.0).unwrap(),
        ];
        let model = FlModel { learners, transcript: vec![] };
        assert_eq!(predict_fl(&model, &[5.0, 5.0]).unwrap(), 0.4);
        // (1,0) is at distance 1 from both of the first two points under any order.
        assert_eq!(predict_fl(&model, &[1.0, 0.0]).unwrap(), 0.2);
        assert!(matches!(predict_fl(&model, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let same = CoregConfig { k1: 3, k2: 3, p1: 2.0, p2: 2.0, ..Default::default() };
        assert!(matches!(coreg_train(&labeled_grid(10), &[], &SmognConfig::default(), &same), Err(Error::InvalidConfig(_))));
        assert!(matches!(coreg_train(&[], &[], &SmognConfig::default(), &CoregConfig::default()), Err(Error::EmptyLabeledSet)));
    }

    #[test]
    fn serialization_round_trip() {
        let model = coreg_train(&labeled_grid(20), &[], &SmognConfig::default(), &CoregConfig::default()).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"FLKN");
        let back = FlModel::read_from(&mut &bytes[..]).unwrap();
        assert_eq!(back.learners, model.learners);
    }
}
