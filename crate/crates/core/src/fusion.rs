//! Decision-level fusion.
//!
//! Each unimodal output is translated into a nominal indicator:
//!
//! * `F = w_F` when the FL score is strictly below `fl_threshold`, else 0;
//! * `C = w_C` when churn propensity is strictly above `churn_threshold`, else 0;
//! * `V = w_V` when the emotion is Sadness or Anger, else 0.
//!
//! `D = C + F + V` and the risk class is read off the indicator pattern:
//!
//! | (C, F, V)                       | risk |
//! |---------------------------------|------|
//! | (0,0,0), (0,1,0), (0,0,1)       | low  |
//! | (2,0,0), (0,1,1)                | mid  |
//! | (2,1,1), (2,1,0), (2,0,1)       | high |
//!
//! `rank_score = D + churn_propensity / 10` orders customers within a class.

use std::collections::HashMap;

use crate::audio::{build_feature_map, AudioClip, FeatureMap, FeatureParams};
use crate::churn::{predict_churn, ChurnModel};
use crate::data::{CustomerTable, ModalityScores, RiskLabel};
use crate::error::{Error, Result};
use crate::fl::{predict_fl, FlModel};
use crate::ser::{predict_emotion, EmotionModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationConfig {
    pub fl_threshold: f64,
    pub churn_threshold: f64,
    pub w_c: u8,
    pub w_f: u8,
    pub w_v: u8,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        TranslationConfig { fl_threshold: 0.5, churn_threshold: 0.5, w_c: 2, w_f: 1, w_v: 1 }
    }
}

impl TranslationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("fl_threshold", self.fl_threshold), ("churn_threshold", self.churn_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} {t} not in (0,1)")));
            }
        }
        if !(self.w_c >= self.w_f && self.w_f == self.w_v) {
            return Err(Error::InvalidConfig(format!(
                "weights (C={}, F={}, V={}) must satisfy w_C >= w_F = w_V",
                self.w_c, self.w_f, self.w_v
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndicatorTriple {
    pub c: u8,
    pub f: u8,
    pub v: u8,
}

impl IndicatorTriple {
    pub const fn new(c: u8, f: u8, v: u8) -> Self {
        IndicatorTriple { c, f, v }
    }

    pub fn sum(&self) -> u8 {
        self.c + self.f + self.v
    }

    /// The eight triples reachable under the default weights.
    pub fn all_default() -> [IndicatorTriple; 8] {
        let mut out = [IndicatorTriple::new(0, 0, 0); 8];
        let mut i = 0;
        for c in [0, 2] {
            for f in [0, 1] {
                for v in [0, 1] {
                    out[i] = IndicatorTriple::new(c, f, v);
                    i += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionDecision {
    pub d: u8,
    pub risk: RiskLabel,
    /// Absent for the churn-only strategy, which never builds indicators.
    pub triple: Option<IndicatorTriple>,
    pub rank_score: f64,
}

pub fn translate(scores: &ModalityScores, cfg: &TranslationConfig) -> IndicatorTriple {
    let f = if scores.fl_score < cfg.fl_threshold { cfg.w_f } else { 0 };
    let c = if scores.churn_propensity <= cfg.churn_threshold { 0 } else { cfg.w_c };
    let v = if scores.emotion.label.is_negative() { cfg.w_v } else { 0 };
    IndicatorTriple { c, f, v }
}

fn ind(cond: bool) -> u8 {
    u8::from(cond)
}

pub fn low_risk_indicator(d: u8, t: &IndicatorTriple) -> u8 {
    ind(d == 0) * ind(t.c == 0) * ind(t.f == 0) * ind(t.v == 0)
        + ind(d == 1) * ind(t.c == 0) * ind(t.f == 1) * ind(t.v == 0)
        + ind(d == 1) * ind(t.c == 0) * ind(t.f == 0) * ind(t.v == 1)
}

pub fn mid_risk_indicator(d: u8, t: &IndicatorTriple) -> u8 {
    ind(d == 2) * ind(t.c == 2) * ind(t.f == 0) * ind(t.v == 0)
        + ind(d == 2) * ind(t.c == 0) * ind(t.f == 1) * ind(t.v == 1)
}

pub fn high_risk_indicator(d: u8, t: &IndicatorTriple) -> u8 {
    ind(d == 4) * ind(t.c == 2) * ind(t.f == 1) * ind(t.v == 1)
        + ind(d == 3) * ind(t.c == 2) * ind(t.f == 1) * ind(t.v == 0)
        + ind(d == 3) * ind(t.c == 2) * ind(t.f == 0) * ind(t.v == 1)
}

/// Fuses a default-weight triple `(C in {0,2}, F in {0,1}, V in {0,1})`.
pub fn decision_fuse(triple: IndicatorTriple) -> Result<FusionDecision> {
    decision_fuse_scored(triple, 0.0)
}

pub fn decision_fuse_scored(triple: IndicatorTriple, churn_propensity: f64) -> Result<FusionDecision> {
    let IndicatorTriple { c, f, v } = triple;
    if !matches!(c, 0 | 2) || f > 1 || v > 1 {
        return Err(Error::InvalidTriple { c, f, v });
    }
    let d = triple.sum();
    let fired = [
        low_risk_indicator(d, &triple),
        mid_risk_indicator(d, &triple),
        high_risk_indicator(d, &triple),
    ];
    let risk = match fired {
        [1, 0, 0] => RiskLabel::Low,
        [0, 1, 0] => RiskLabel::Mid,
        [0, 0, 1] => RiskLabel::High,
        _ => return Err(Error::InvalidTriple { c, f, v }),
    };
    Ok(FusionDecision { d, risk, triple: Some(triple), rank_score: d as f64 + churn_propensity / 10.0 })
}

/// Fuses a triple produced under arbitrary validated weights: the risk class
/// follows which indicators fired, `D` is the weighted sum.
pub fn decision_fuse_weighted(triple: IndicatorTriple, cfg: &TranslationConfig, churn_propensity: f64) -> Result<FusionDecision> {
    let check = |val: u8, w: u8| val == 0 || val == w;
    if !(check(triple.c, cfg.w_c) && check(triple.f, cfg.w_f) && check(triple.v, cfg.w_v)) {
        return Err(Error::InvalidTriple { c: triple.c, f: triple.f, v: triple.v });
    }
    let pattern = IndicatorTriple::new(
        if triple.c > 0 { 2 } else { 0 },
        u8::from(triple.f > 0),
        u8::from(triple.v > 0),
    );
    let base = decision_fuse(pattern)?;
    let d = triple.sum();
    Ok(FusionDecision { d, risk: base.risk, triple: Some(triple), rank_score: d as f64 + churn_propensity / 10.0 })
}

/// Churn-only banding: `D' = round(4 p)`, low for `D' <= 1`, mid for 2, high for `D' >= 3`.
pub fn churn_only_decision(churn_propensity: f64) -> FusionDecision {
    let d = (4.0 * churn_propensity).round().clamp(0.0, 4.0) as u8;
    let risk = match d {
        0 | 1 => RiskLabel::Low,
        2 => RiskLabel::Mid,
        _ => RiskLabel::High,
    };
    FusionDecision { d, risk, triple: None, rank_score: d as f64 + churn_propensity / 10.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    Late,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::None, Strategy::Late, Strategy::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Late => "late",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "late" => Ok(Strategy::Late),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub id: String,
    pub scores: ModalityScores,
    pub decision: FusionDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskAssignments {
    pub strategy: Strategy,
    pub entries: Vec<Assignment>,
}

impl RiskAssignments {
    pub fn risk_labels(&self) -> Vec<RiskLabel> {
        self.entries.iter().map(|a| a.decision.risk).collect()
    }

    pub fn histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for a in &self.entries {
            h[a.decision.risk.index()] += 1;
        }
        h
    }

    /// `id,fl_score,churn_propensity,emotion_binary,C,F,V,D,risk,rank_score`; C/F/V are
    /// empty for the churn-only strategy.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "fl_score", "churn_propensity", "emotion_binary", "C", "F", "V", "D", "risk", "rank_score"])?;
        for a in &self.entries {
            let (c, f, v) = match a.decision.triple {
                Some(t) => (t.c.to_string(), t.f.to_string(), t.v.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                a.id.clone(),
                a.scores.fl_score.to_string(),
                a.scores.churn_propensity.to_string(),
                a.scores.emotion.binary.to_string(),
                c,
                f,
                v,
                a.decision.d.to_string(),
                a.decision.risk.to_string(),
                a.decision.rank_score.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Fuses per-customer scores under `strategy`. `Strategy::None` uses churn propensity only.
pub fn fuse_scores(
    strategy: Strategy,
    ids: &[String],
    scores: &[ModalityScores],
    cfg: &TranslationConfig,
) -> Result<RiskAssignments> {
    cfg.validate()?;
    if ids.len() != scores.len() {
        return Err(Error::LengthMismatch(ids.len(), scores.len()));
    }
    let entries = ids
        .iter()
        .zip(scores)
        .map(|(id, s)| {
            let decision = match strategy {
                Strategy::None => churn_only_decision(s.churn_propensity),
                Strategy::Late | Strategy::Hybrid => {
                    decision_fuse_weighted(translate(s, cfg), cfg, s.churn_propensity)?
                }
            };
            Ok(Assignment { id: id.clone(), scores: *s, decision })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskAssignments { strategy, entries })
}

/// The three fitted unimodal predictors plus the audio front-end settings.
#[derive(Debug, Clone)]
pub struct UnimodalModels {
    pub fl: FlModel,
    pub ser: EmotionModel,
    pub churn: ChurnModel,
    pub features: FeatureParams,
}

/// Feature-map source: either raw clips or maps computed ahead of time.
pub enum AudioSource<'a> {
    Clips(&'a HashMap<String, AudioClip>),
    Maps(&'a HashMap<String, FeatureMap>),
}

fn emotion_for(
    id: &str,
    audio_ref: Option<&String>,
    audio: &AudioSource<'_>,
    models: &UnimodalModels,
) -> Result<crate::data::EmotionPrediction> {
    let missing = |what: &str| Error::MissingModality { id: id.to_string(), what: what.to_string() };
    let key = audio_ref.ok_or_else(|| missing("no audio_ref"))?;
    match audio {
        AudioSource::Clips(clips) => {
            let clip = clips.get(key).ok_or_else(|| missing("audio clip not found"))?;
            predict_emotion(&models.ser, &build_feature_map(clip, &models.features)?)
        }
        AudioSource::Maps(maps) => {
            let map = maps.get(key).ok_or_else(|| missing("feature map not found"))?;
            predict_emotion(&models.ser, map)
        }
    }
}

/// FL score and emotion for each customer in the table.
pub fn score_side_modalities(
    table: &CustomerTable,
    audio: &AudioSource<'_>,
    models: &UnimodalModels,
) -> Result<Vec<(f64, crate::data::EmotionPrediction)>> {
    table
        .rows
        .iter()
        .map(|r| {
            let fl = predict_fl(&models.fl, &r.features)?;
            let emo = emotion_for(&r.id, r.audio_ref.as_ref(), audio, models)?;
            Ok((fl, emo))
        })
        .collect()
}

/// Appends the FL score and binary emotion to a feature vector.
pub fn augment_features(features: &[f64], fl_score: f64, emotion_binary: u8) -> Vec<f64> {
    let mut out = Vec::with_capacity(features.len() + 2);
    out.extend_from_slice(features);
    out.push(fl_score);
    out.push(emotion_binary as f64);
    out
}

fn ids(table: &CustomerTable) -> Vec<String> {
    table.rows.iter().map(|r| r.id.clone()).collect()
}

/// Every modality scores its own source; the churn model sees only tabular features.
pub fn run_late_fusion(
    table: &CustomerTable,
    audio: &AudioSource<'_>,
    models: &UnimodalModels,
    cfg: &TranslationConfig,
) -> Result<RiskAssignments> {
    let side = score_side_modalities(table, audio, models)?;
    let scores = table
        .rows
        .iter()
        .zip(&side)
        .map(|(r, &(fl, emo))| ModalityScores::new(fl, predict_churn(&models.churn, &r.features)?, emo))
        .collect::<Result<Vec<_>>>()?;
    fuse_scores(Strategy::Late, &ids(table), &scores, cfg)
}

/// FL score and emotion are appended to the churn model's inputs before the
/// decision-level step. `models.churn` must be trained on the augmented width.
pub fn run_hybrid_fusion(
    table: &CustomerTable,
    audio: &AudioSource<'_>,
    models: &UnimodalModels,
    cfg: &TranslationConfig,
) -> Result<RiskAssignments> {
    let expected = table.schema.width() + 2;
    if models.churn.input_width != expected {
        return Err(Error::SchemaMismatch(format!(
            "hybrid churn model expects {} inputs, augmented table has {expected}",
            models.churn.input_width
        )));
    }
    let side = score_side_modalities(table, audio, models)?;
    let scores = table
        .rows
        .iter()
        .zip(&side)
        .map(|(r, &(fl, emo))| {
            let p = predict_churn(&models.churn, &augment_features(&r.features, fl, emo.binary))?;
            ModalityScores::new(fl, p, emo)
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_scores(Strategy::Hybrid, &ids(table), &scores, cfg)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EmotionLabel, EmotionPrediction};

    fn scores(fl: f64, churn: f64, label: EmotionLabel) -> ModalityScores {
        ModalityScores::new(fl, churn, EmotionPrediction::from_label(label, 0.9).unwrap()).unwrap()
    }

    #[test]
    fn translation_propositions() {
        let cfg = TranslationConfig::default();
        assert_eq!(translate(&scores(0.3, 0.1, EmotionLabel::Happiness), &cfg).f, 1);
        assert_eq!(translate(&scores(0.5, 0.1, EmotionLabel::Happiness), &cfg).f, 0);
        assert_eq!(translate(&scores(0.9, 0.5, EmotionLabel::Happiness), &cfg).c, 0);
        assert_eq!(translate(&scores(0.9, 0.5000001, EmotionLabel::Happiness), &cfg).c, 2);
        assert_eq!(translate(&scores(0.9, 0.1, EmotionLabel::Sadness), &cfg).v, 1);
        assert_eq!(translate(&scores(0.9, 0.1, EmotionLabel::Anger), &cfg).v, 1);
        assert_eq!(translate(&scores(0.9, 0.1, EmotionLabel::Neutral), &cfg).v, 0);
    }

    #[test]
    fn decision_blocks() {
        let cases = [
            ((0, 0, 0), 0, RiskLabel::Low),
            ((0, 1, 0), 1, RiskLabel::Low),
            ((0, 0, 1), 1, RiskLabel::Low),
            ((2, 0, 0), 2, RiskLabel::Mid),
            ((0, 1, 1), 2, RiskLabel::Mid),
            ((2, 1, 1), 4, RiskLabel::High),
            ((2, 1, 0), 3, RiskLabel::High),
            ((2, 0, 1), 3, RiskLabel::High),
        ];
        for ((c, f, v), d, risk) in cases {
            let dec = decision_fuse(IndicatorTriple::new(c, f, v)).unwrap();
            assert_eq!((dec.d, dec.risk), (d, risk), "({c},{f},{v})");
        }
    }

    #[test]
    fn invalid_triples() {
        for (c, f, v) in [(1, 0, 0), (0, 2, 0), (0, 0, 3), (4, 1, 1)] {
            assert!(matches!(decision_fuse(IndicatorTriple::new(c, f, v)), Err(Error::InvalidTriple { .. })));
        }
    }

    #[test]
    fn rank_score_keeps_class_order() {
        let lo = decision_fuse_scored(IndicatorTriple::new(0, 1, 0), 1.0).unwrap();
        let mid = decision_fuse_scored(IndicatorTriple::new(0, 1, 1), 0.0).unwrap();
        assert!(lo.rank_score < mid.rank_score);
        assert!((mid.rank_score - 2.0).abs() < 1e-15);
    }

    #[test]
    fn churn_only_bands() {
        assert_eq!(churn_only_decision(0.1).risk, RiskLabel::Low);
        assert_eq!(churn_only_decision(0.3).risk, RiskLabel::Low);
        assert_eq!(churn_only_decision(0.5).risk, RiskLabel::Mid);
        assert_eq!(churn_only_decision(0.7).risk, RiskLabel::High);
        assert_eq!(churn_only_decision(1.0).d, 4);
    }

    #[test]
    fn weight_validation_and_scaled_weights() {
        assert!(TranslationConfig { w_f: 1, w_v: 2, ..Default::default() }.validate().is_err());
        assert!(TranslationConfig { w_c: 0, ..Default::default() }.validate().is_err());
        assert!(TranslationConfig { fl_threshold: 1.0, ..Default::default() }.validate().is_err());
        let cfg = TranslationConfig { w_c: 4, w_f: 2, w_v: 2, ..Default::default() };
        let t = translate(&scores(0.1, 0.9, EmotionLabel::Anger), &cfg);
        assert_eq!(t, IndicatorTriple::new(4, 2, 2));
        let dec = decision_fuse_weighted(t, &cfg, 0.9).unwrap();
        assert_eq!((dec.d, dec.risk), (8, RiskLabel::High));
    }

    #[test]
    fn fuse_is_per_customer() {
        let cfg = TranslationConfig::default();
        let s = vec![
            scores(0.9, 0.1, EmotionLabel::Happiness),
            scores(0.2, 0.9, EmotionLabel::Sadness),
            scores(0.2, 0.2, EmotionLabel::Anger),
        ];
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let fwd = fuse_scores(Strategy::Late, &ids, &s, &cfg).unwrap();
        assert_eq!(fwd.risk_labels(), vec![RiskLabel::Low, RiskLabel::High, RiskLabel::Mid]);
        let perm = [2, 0, 1];
        let pids: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let ps: Vec<_> = perm.iter().map(|&i| s[i]).collect();
        let back = fuse_scores(Strategy::Late, &pids, &ps, &cfg).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(back.entries[k], fwd.entries[i]);
        }
        let csv = String::from_utf8(fwd.to_csv().unwrap()).unwrap();
        assert!(csv.starts_with("id,fl_score,churn_propensity,emotion_binary,C,F,V,D,risk,rank_score\n"));
        assert!(csv.contains("b,0.2,0.9,1,2,1,1,4,high,4.09"));
    }
}
