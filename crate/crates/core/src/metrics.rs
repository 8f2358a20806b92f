//! Ranking and classification metrics: average precision / MAP over the
//! three risk-level queries, macro-averaged F1, ROC AUC and Pearson
//! correlations between modality outputs and the fused decision.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::data::RiskLabel;
use crate::error::{Error, Result};
use crate::fusion::RiskAssignments;

/// `(1/m) * sum_k P(k) rel(k)` with `P(k)` the precision of the top `k`.
pub fn average_precision(ranked_relevance: &[u8], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in ranked_relevance.iter().enumerate() {
        if rel > 1 {
            return Err(Error::ValueError(format!("relevance {rel} not in {{0,1}}")));
        }
        if rel == 1 {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits > m {
        return Err(Error::ValueError(format!("{hits} relevant items ranked but m = {m}")));
    }
    Ok(sum / m as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskQuery {
    pub level: RiskLabel,
    pub ranked_ids: Vec<String>,
    pub relevant_ids: HashSet<String>,
}

impl RiskQuery {
    pub fn average_precision(&self) -> Result<f64> {
        let rel: Vec<u8> = self.ranked_ids.iter().map(|id| u8::from(self.relevant_ids.contains(id))).collect();
        average_precision(&rel, self.relevant_ids.len())
    }
}

pub fn mean_average_precision(queries: &[RiskQuery]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let total = queries.iter().map(RiskQuery::average_precision).sum::<Result<f64>>()?;
    Ok(total / queries.len() as f64)
}

/// Centre of the mid class on the rank-score axis (`D = 2` plus half the tie-break span).
pub const MID_RANK_CENTER: f64 = 2.05;

/// Retrieval affinity of a rank score for a risk level: high ranks by
/// descending score, low by ascending score, mid by closeness to the mid band.
pub fn level_affinity(level: RiskLabel, rank_score: f64) -> f64 {
    match level {
        RiskLabel::High => rank_score,
        RiskLabel::Low => -rank_score,
        RiskLabel::Mid => -(rank_score - MID_RANK_CENTER).abs(),
    }
}

/// One query per risk level present in `truth`, each ranking the whole cohort.
/// Equal affinities keep cohort order.
pub fn build_risk_queries(assignments: &RiskAssignments, truth: &HashMap<String, RiskLabel>) -> Result<Vec<RiskQuery>> {
    let mut queries = Vec::with_capacity(3);
    for level in RiskLabel::ALL {
        let relevant_ids: HashSet<String> = assignments
            .entries
            .iter()
            .filter(|a| truth.get(&a.id) == Some(&level))
            .map(|a| a.id.clone())
            .collect();
        if relevant_ids.is_empty() {
            continue;
        }
        let mut order: Vec<(f64, usize)> = assignments
            .entries
            .iter()
            .enumerate()
            .map(|(i, a)| (level_affinity(level, a.decision.rank_score), i))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let ranked_ids = order.into_iter().map(|(_, i)| assignments.entries[i].id.clone()).collect();
        queries.push(RiskQuery { level, ranked_ids, relevant_ids });
    }
    Ok(queries)
}

/// Per-class F1 for the three risk classes; `0` where precision + recall is `0`.
pub fn per_class_f1(predicted: &[RiskLabel], truth: &[RiskLabel]) -> Result<[f64; 3]> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(Error::ValueError("empty label lists".into()));
    }
    let mut out = [0.0; 3];
    for class in RiskLabel::ALL {
        let tp = predicted.iter().zip(truth).filter(|(p, t)| **p == class && **t == class).count() as f64;
        let pred_pos = predicted.iter().filter(|p| **p == class).count() as f64;
        let true_pos = truth.iter().filter(|t| **t == class).count() as f64;
        let precision = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
        let recall = if true_pos > 0.0 { tp / true_pos } else { 0.0 };
        out[class.index()] = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    Ok(out)
}

/// Unweighted mean of the three per-class F1 scores.
pub fn macro_f1(predicted: &[RiskLabel], truth: &[RiskLabel]) -> Result<f64> {
    Ok(per_class_f1(predicted, truth)?.iter().sum::<f64>() / 3.0)
}

pub fn accuracy(predicted: &[RiskLabel], truth: &[RiskLabel]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(Error::ValueError("empty label lists".into()));
    }
    Ok(predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / predicted.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties counting one half.
/// Computed from mid-ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive ranks, counted in half-units to stay in integers.
    let mut pos_rank_x2: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean, (i + j + 2) / 2.
        let mid_x2 = (i + j + 2) as u64;
        let pos_in_group = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        pos_rank_x2 += pos_in_group * mid_x2;
        i = j + 1;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    // U = sum(pos ranks) - p(p+1)/2
    let u_x2 = pos_rank_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateColumn(format!("{} observations; need at least 3", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateColumn("constant column".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub const CORRELATION_COLUMNS: [&str; 4] = ["fl_score", "churn_propensity", "emotion_binary", "D"];

/// Pairwise Pearson coefficients, keyed `(a, b)` with `a` before `b` in [`CORRELATION_COLUMNS`].
#[derive(Debug, Clone, PartialEq)]
pub struct Correlations {
    pub pairs: Vec<((&'static str, &'static str), f64)>,
}

impl Correlations {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.pairs
            .iter()
            .find(|((x, y), _)| (*x == a && *y == b) || (*x == b && *y == a))
            .map(|(_, v)| *v)
    }
}

pub fn correlation_report(assignments: &RiskAssignments) -> Result<Correlations> {
    let cols: [Vec<f64>; 4] = [
        assignments.entries.iter().map(|a| a.scores.fl_score).collect(),
        assignments.entries.iter().map(|a| a.scores.churn_propensity).collect(),
        assignments.entries.iter().map(|a| a.scores.emotion.binary as f64).collect(),
        assignments.entries.iter().map(|a| a.decision.d as f64).collect(),
    ];
    let mut pairs = Vec::with_capacity(6);
    for i in 0..4 {
        for j in i + 1..4 {
            let r = pearson(&cols[i], &cols[j]).map_err(|e| match e {
                Error::DegenerateColumn(msg) => {
                    Error::DegenerateColumn(format!("{} vs {}: {msg}", CORRELATION_COLUMNS[i], CORRELATION_COLUMNS[j]))
                }
                other => other,
            })?;
            pairs.push(((CORRELATION_COLUMNS[i], CORRELATION_COLUMNS[j]), r));
        }
    }
    Ok(Correlations { pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub strategy: String,
    pub map: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub per_class_f1: [f64; 3],
    pub histogram: [usize; 3],
    /// Empty when a column was constant.
    pub correlations: Option<Correlations>,
}

impl MetricReport {
    /// `key = value` lines; `map` and `macro_f1` also appear scaled by 100.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "strategy = {}", self.strategy);
        let _ = writeln!(s, "map = {:.6}", self.map);
        let _ = writeln!(s, "map_x100 = {:.2}", self.map * 100.0);
        let _ = writeln!(s, "macro_f1 = {:.6}", self.macro_f1);
        let _ = writeln!(s, "macro_f1_x100 = {:.2}", self.macro_f1 * 100.0);
        let _ = writeln!(s, "accuracy = {:.6}", self.accuracy);
        let _ = writeln!(s, "auc = {:.6}", self.auc);
        for l in RiskLabel::ALL {
            let _ = writeln!(s, "f1_{} = {:.6}", l, self.per_class_f1[l.index()]);
        }
        for l in RiskLabel::ALL {
            let _ = writeln!(s, "count_{} = {}", l, self.histogram[l.index()]);
        }
        if let Some(c) = &self.correlations {
            for ((a, b), r) in &c.pairs {
                let _ = writeln!(s, "corr_{a}_{b} = {r:.6}");
            }
        }
        s
    }
}

pub fn evaluate(
    assignments: &RiskAssignments,
    truth: &HashMap<String, RiskLabel>,
    churn_outcomes: &[u8],
) -> Result<MetricReport> {
    let predicted = assignments.risk_labels();
    let truth_labels = assignments
        .entries
        .iter()
        .map(|a| truth.get(&a.id).copied().ok_or_else(|| Error::ValueError(format!("no ground truth for {}", a.id))))
        .collect::<Result<Vec<_>>>()?;
    let queries = build_risk_queries(assignments, truth)?;
    let propensities: Vec<f64> = assignments.entries.iter().map(|a| a.scores.churn_propensity).collect();
    Ok(MetricReport {
        strategy: assignments.strategy.as_str().to_string(),
        map: mean_average_precision(&queries)?,
        macro_f1: macro_f1(&predicted, &truth_labels)?,
        accuracy: accuracy(&predicted, &truth_labels)?,
        auc: roc_auc(&propensities, churn_outcomes)?,
        per_class_f1: per_class_f1(&predicted, &truth_labels)?,
        histogram: assignments.histogram(),
        correlations: correlation_report(assignments).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use RiskLabel::*;

    /// Pairwise count over all positive/negative pairs.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[1, 1, 1], 3).unwrap(), 1.0);
        assert!((average_precision(&[1, 0, 1], 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(average_precision(&[0, 0], 0), Err(Error::NoRelevant)));
    }

    fn query(level: RiskLabel, ranked: &[&str], relevant: &[&str]) -> RiskQuery {
        RiskQuery {
            level,
            ranked_ids: ranked.iter().map(|s| s.to_string()).collect(),
            relevant_ids: relevant.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn map_examples() {
        let perfect = vec![query(Low, &["a", "b"], &["a"]), query(High, &["b", "a"], &["b"])];
        assert_eq!(mean_average_precision(&perfect).unwrap(), 1.0);
        // AP 1, 0.5, 0.5
        let mixed = vec![
            query(Low, &["a", "b"], &["a"]),
            query(Mid, &["a", "b"], &["b"]),
            query(High, &["c", "b"], &["b"]),
        ];
        assert!((mean_average_precision(&mixed).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(mean_average_precision(&[]), Err(Error::EmptyQuerySet)));
    }

    #[test]
    fn macro_f1_examples() {
        let t = [Low, Low, Mid, High];
        assert_eq!(macro_f1(&t, &t).unwrap(), 1.0);
        let p = [Low, Mid, Mid, High];
        let f = per_class_f1(&p, &t).unwrap();
        assert!((f[0] - 2.0 / 3.0).abs() < 1e-15 && (f[1] - 2.0 / 3.0).abs() < 1e-15 && f[2] == 1.0);
        assert!((macro_f1(&p, &t).unwrap() - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(macro_f1(&[Low, Low], &[High, Mid]).unwrap(), 0.0);
        assert!(matches!(macro_f1(&[Low], &[Low, Mid]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc_pairs(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::DegenerateColumn(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[2.0, 1.0]), Err(Error::DegenerateColumn(_))));
    }

    proptest! {
        #[test]
        fn ap_ignores_tail_order(head in prop::collection::vec(0u8..=1, 1..8), tail_len in 0usize..6) {
            let m = head.iter().filter(|&&r| r == 1).count();
            prop_assume!(m > 0);
            let mut a = head.clone();
            a.extend(std::iter::repeat_n(0, tail_len));
            let ap = average_precision(&a, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert_eq!(ap, average_precision(&head, m).unwrap());
        }

        #[test]
        fn auc_monotone_invariant(scores in prop::collection::vec(-5.0f64..5.0, 2..12), seed in 0u64..1000) {
            let labels: Vec<u8> = (0..scores.len()).map(|i| ((seed >> (i % 10)) & 1) as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = roc_auc(&scores, &labels).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(a, roc_auc(&t, &labels).unwrap());
            prop_assert!((a - auc_pairs(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn macro_f1_relabel_symmetric(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..20)) {
            let p: Vec<RiskLabel> = pairs.iter().map(|x| RiskLabel::from_index(x.0).unwrap()).collect();
            let t: Vec<RiskLabel> = pairs.iter().map(|x| RiskLabel::from_index(x.1).unwrap()).collect();
            let rot = |l: &RiskLabel| RiskLabel::from_index((l.index() + 1) % 3).unwrap();
            let pr: Vec<_> = p.iter().map(rot).collect();
            let tr: Vec<_> = t.iter().map(rot).collect();
            let a = macro_f1(&p, &t).unwrap();
            prop_assert!((a - macro_f1(&pr, &tr).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
