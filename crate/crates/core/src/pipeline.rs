//! End-to-end experiment: split a cohort, fit the three unimodal models on the
//! training part, run the none/late/hybrid strategies on the held-out part and
//! score them against the cohort's latent tiers.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{build_feature_map, FeatureMap, FeatureParams};
use crate::churn::{train_churn, ChurnModel, ChurnTrainConfig};
use crate::data::{CustomerTable, RiskLabel};
use crate::error::{Error, Result};
use crate::fl::{coreg_train, predict_fl, CoregConfig, FlModel, SmognConfig};
use crate::fusion::{
    augment_features, fuse_scores, run_hybrid_fusion, run_late_fusion, AudioSource, RiskAssignments, Strategy,
    TranslationConfig, UnimodalModels,
};
use crate::metrics::{evaluate, MetricReport};
use crate::mlp::TrainConfig;
use crate::ser::{predict_emotion, train_emotion_with, EmotionModel};
use crate::synth::{generate_cohort, SynthConfig, SyntheticCohort};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub smogn: SmognConfig,
    pub coreg: CoregConfig,
    pub ser: TrainConfig,
    pub ser_hidden: Vec<usize>,
    pub churn: ChurnTrainConfig,
    pub translation: TranslationConfig,
    pub features: FeatureParams,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            smogn: SmognConfig::default(),
            coreg: CoregConfig { max_iterations: 20, pool_size: 100, batch_per_iter: 2, ..Default::default() },
            ser: TrainConfig { learning_rate: 0.01, epochs: 20, batch_size: 32, l2_penalty: 1e-4, seed: 0 },
            ser_hidden: vec![16],
            churn: ChurnTrainConfig::default(),
            translation: TranslationConfig::default(),
            features: FeatureParams::default(),
            test_fraction: 0.3,
        }
    }
}

/// Mixes a tag into the top-level seed so each stage draws an independent stream.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl ExperimentConfig {
    /// Sets every stage seed from one top-level seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.smogn.seed = derive_seed(seed, "smogn");
        self.coreg.seed = derive_seed(seed, "coreg");
        self.ser.seed = derive_seed(seed, "ser");
        self.churn.hyper.seed = derive_seed(seed, "churn");
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.smogn.validate()?;
        self.coreg.validate()?;
        self.ser.validate()?;
        self.churn.hyper.validate()?;
        self.translation.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("test_fraction {} not in (0,1)", self.test_fraction)));
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.synth.seed, "split")
    }
}

/// Row indices of the training and held-out parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut test = idx.split_off(n - n_test);
    let mut train = idx;
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// Feature maps for every clip, keyed by audio reference.
pub fn compute_feature_maps(cohort: &SyntheticCohort, params: &FeatureParams) -> Result<HashMap<String, FeatureMap>> {
    let clips: Vec<(&String, &crate::audio::AudioClip)> = cohort.audio_clips.iter().collect();
    clips
        .par_iter()
        .map(|(k, clip)| Ok(((*k).clone(), build_feature_map(clip, params)?)))
        .collect()
}

pub fn train_fl_model(train: &CustomerTable, smogn: &SmognConfig, coreg: &CoregConfig) -> Result<FlModel> {
    let labeled: Vec<(Vec<f64>, f64)> =
        train.rows.iter().filter_map(|r| r.fl_label.map(|y| (r.features.clone(), y))).collect();
    let unlabeled: Vec<Vec<f64>> = train.rows.iter().filter(|r| r.fl_label.is_none()).map(|r| r.features.clone()).collect();
    coreg_train(&labeled, &unlabeled, smogn, coreg)
}

pub fn train_ser_model(
    train: &CustomerTable,
    maps: &HashMap<String, FeatureMap>,
    emotion_binary: &HashMap<String, u8>,
    hyper: &TrainConfig,
    hidden: &[usize],
) -> Result<EmotionModel> {
    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for r in &train.rows {
        let missing = |what: &str| Error::MissingModality { id: r.id.clone(), what: what.to_string() };
        let key = r.audio_ref.as_ref().ok_or_else(|| missing("no audio_ref"))?;
        xs.push(maps.get(key).ok_or_else(|| missing("no feature map"))?.clone());
        ys.push(*emotion_binary.get(&r.id).ok_or_else(|| missing("no emotion label"))?);
    }
    train_emotion_with(&xs, &ys, hyper, hidden)
}

fn churn_labels(table: &CustomerTable) -> Result<Vec<u8>> {
    table
        .rows
        .iter()
        .map(|r| r.churn_outcome.ok_or_else(|| Error::ValueError(format!("customer {} has no churn outcome", r.id))))
        .collect()
}

pub fn train_churn_baseline(train: &CustomerTable, cfg: &ChurnTrainConfig) -> Result<ChurnModel> {
    train_churn(&train.feature_matrix(), &churn_labels(train)?, cfg)
}

/// Churn model over features augmented with FL score and emotion class from the fitted side models.
pub fn train_churn_hybrid(
    train: &CustomerTable,
    maps: &HashMap<String, FeatureMap>,
    fl: &FlModel,
    ser: &EmotionModel,
    cfg: &ChurnTrainConfig,
) -> Result<ChurnModel> {
    let x = augmented_matrix(train, maps, fl, ser)?;
    let mut cfg = cfg.clone();
    cfg.rfe_k = (cfg.rfe_k + 2).min(train.schema.width() + 2);
    train_churn(&x, &churn_labels(train)?, &cfg)
}

pub fn augmented_matrix(
    table: &CustomerTable,
    maps: &HashMap<String, FeatureMap>,
    fl: &FlModel,
    ser: &EmotionModel,
) -> Result<Vec<Vec<f64>>> {
    table
        .rows
        .iter()
        .map(|r| {
            let missing = |what: &str| Error::MissingModality { id: r.id.clone(), what: what.to_string() };
            let key = r.audio_ref.as_ref().ok_or_else(|| missing("no audio_ref"))?;
            let map = maps.get(key).ok_or_else(|| missing("no feature map"))?;
            let emo = predict_emotion(ser, map)?;
            Ok(augment_features(&r.features, predict_fl(fl, &r.features)?, emo.binary))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub fl: FlModel,
    pub ser: EmotionModel,
    pub churn: ChurnModel,
    pub churn_hybrid: ChurnModel,
}

pub fn train_all(
    cohort: &SyntheticCohort,
    maps: &HashMap<String, FeatureMap>,
    split: &Split,
    cfg: &ExperimentConfig,
) -> Result<TrainedModels> {
    let train = cohort.table.subset(&split.train);
    let emotions = emotion_labels(cohort);
    let fl = train_fl_model(&train, &cfg.smogn, &cfg.coreg)?;
    let ser = train_ser_model(&train, maps, &emotions, &cfg.ser, &cfg.ser_hidden)?;
    let churn = train_churn_baseline(&train, &cfg.churn)?;
    let churn_hybrid = train_churn_hybrid(&train, maps, &fl, &ser, &cfg.churn)?;
    Ok(TrainedModels { fl, ser, churn, churn_hybrid })
}

pub fn emotion_labels(cohort: &SyntheticCohort) -> HashMap<String, u8> {
    cohort.table.rows.iter().zip(&cohort.ground_truth).map(|(r, g)| (r.id.clone(), g.emotion.binary())).collect()
}

pub fn tier_truth(cohort: &SyntheticCohort) -> HashMap<String, RiskLabel> {
    cohort.table.rows.iter().zip(&cohort.ground_truth).map(|(r, g)| (r.id.clone(), g.tier)).collect()
}

/// Runs one strategy on `table`.
pub fn run_strategy(
    strategy: Strategy,
    table: &CustomerTable,
    maps: &HashMap<String, FeatureMap>,
    models: &TrainedModels,
    cfg: &ExperimentConfig,
) -> Result<RiskAssignments> {
    let unimodal = |churn: &ChurnModel| UnimodalModels {
        fl: models.fl.clone(),
        ser: models.ser.clone(),
        churn: churn.clone(),
        features: cfg.features.clone(),
    };
    let source = AudioSource::Maps(maps);
    match strategy {
        Strategy::Late => run_late_fusion(table, &source, &unimodal(&models.churn), &cfg.translation),
        Strategy::Hybrid => run_hybrid_fusion(table, &source, &unimodal(&models.churn_hybrid), &cfg.translation),
        Strategy::None => {
            let late = run_late_fusion(table, &source, &unimodal(&models.churn), &cfg.translation)?;
            let ids: Vec<String> = late.entries.iter().map(|a| a.id.clone()).collect();
            let scores: Vec<_> = late.entries.iter().map(|a| a.scores).collect();
            fuse_scores(Strategy::None, &ids, &scores, &cfg.translation)
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub assignments: RiskAssignments,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub seed: u64,
    pub outcomes: Vec<StrategyOutcome>,
}

impl ExperimentResult {
    pub fn report(&self, s: Strategy) -> &MetricReport {
        &self.outcome(s).report
    }

    pub fn outcome(&self, s: Strategy) -> &StrategyOutcome {
        self.outcomes.iter().find(|o| o.assignments.strategy == s).expect("strategy was run")
    }
}

pub fn evaluate_strategies(
    cohort: &SyntheticCohort,
    maps: &HashMap<String, FeatureMap>,
    split: &Split,
    models: &TrainedModels,
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
) -> Result<Vec<StrategyOutcome>> {
    let test = cohort.table.subset(&split.test);
    let truth = tier_truth(cohort);
    let outcomes = churn_labels(&test)?;
    strategies
        .iter()
        .map(|&s| {
            let assignments = run_strategy(s, &test, maps, models, cfg)?;
            let report = evaluate(&assignments, &truth, &outcomes)?;
            Ok(StrategyOutcome { assignments, report })
        })
        .collect()
}

/// Generates a cohort for `seed`, trains everything and evaluates all strategies.
pub fn run_experiment(base: &ExperimentConfig, seed: u64) -> Result<ExperimentResult> {
    let cfg = base.clone().with_seed(seed);
    cfg.validate()?;
    let cohort = generate_cohort(&cfg.synth)?;
    let maps = compute_feature_maps(&cohort, &cfg.features)?;
    let split = split_indices(cohort.table.len(), cfg.test_fraction, cfg.split_seed());
    let models = train_all(&cohort, &maps, &split, &cfg)?;
    let outcomes = evaluate_strategies(&cohort, &maps, &split, &models, &cfg, &Strategy::ALL)?;
    Ok(ExperimentResult { seed, outcomes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(xs: &[f64]) -> MeanStd {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub map: MeanStd,
    pub macro_f1: MeanStd,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
    /// Mean count per risk class.
    pub histogram: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<ExperimentResult>,
}

impl Comparison {
    pub fn row(&self, s: Strategy) -> &ComparisonRow {
        self.rows.iter().find(|r| r.strategy == s).expect("strategy present")
    }

    /// `strategy,map_mean,map_std,...` with map and macro-F1 scaled by 100.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "strategy", "map_mean", "map_std", "macro_f1_mean", "macro_f1_std", "accuracy_mean", "accuracy_std",
            "auc_mean", "auc_std", "low", "mid", "high",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.strategy.as_str().to_string(),
                format!("{:.2}", 100.0 * r.map.mean),
                format!("{:.2}", 100.0 * r.map.std),
                format!("{:.2}", 100.0 * r.macro_f1.mean),
                format!("{:.2}", 100.0 * r.macro_f1.std),
                format!("{:.4}", r.accuracy.mean),
                format!("{:.4}", r.accuracy.std),
                format!("{:.4}", r.auc.mean),
                format!("{:.4}", r.auc.std),
                format!("{:.1}", r.histogram[0]),
                format!("{:.1}", r.histogram[1]),
                format!("{:.1}", r.histogram[2]),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>14} {:>14} {:>16} {:>16}", "strategy", "MAP", "MA-F1", "accuracy", "AUC");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>6.2} ± {:<5.2} {:>6.2} ± {:<5.2} {:>7.4} ± {:<6.4} {:>7.4} ± {:<6.4}",
                r.strategy.as_str(),
                100.0 * r.map.mean,
                100.0 * r.map.std,
                100.0 * r.macro_f1.mean,
                100.0 * r.macro_f1.std,
                r.accuracy.mean,
                r.accuracy.std,
                r.auc.mean,
                r.auc.std
            );
        }
        s
    }
}

pub fn compare(base: &ExperimentConfig, seeds: &[u64]) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one seed".into()));
    }
    let runs = seeds.iter().map(|&s| run_experiment(base, s)).collect::<Result<Vec<_>>>()?;
    let rows = Strategy::ALL
        .iter()
        .map(|&st| {
            let pick = |f: fn(&MetricReport) -> f64| MeanStd::of(&runs.iter().map(|r| f(r.report(st))).collect::<Vec<_>>());
            let mut histogram = [0.0; 3];
            for r in &runs {
                for (h, c) in histogram.iter_mut().zip(r.report(st).histogram) {
                    *h += c as f64 / runs.len() as f64;
                }
            }
            ComparisonRow {
                strategy: st,
                map: pick(|r| r.map),
                macro_f1: pick(|r| r.macro_f1),
                accuracy: pick(|r| r.accuracy),
                auc: pick(|r| r.auc),
                histogram,
            }
        })
        .collect();
    Ok(Comparison { seeds: seeds.to_vec(), rows, runs })
}
