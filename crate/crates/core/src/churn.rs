//! Churn propensity: recursive feature elimination with a logistic scorer,
//! z-score normalization, SMOTE on the training split and an MLP classifier.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! "CHRN" | version u16 | input_width u32 | n_selected u32 | indices u32 x n_selected
//!        | mean f64 x n_selected | std f64 x n_selected | MLP block
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::knn::nearest;
use crate::mlp::{sigmoid, train_mlp, MlpParams, TrainConfig, TrainReport};
use crate::norm::Standardizer;

pub const CHURN_MAGIC: &[u8; 4] = b"CHRN";
pub const CHURN_VERSION: u16 = 1;

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

fn check_binary(y: &[u8]) -> Result<(usize, usize)> {
    if y.iter().any(|&v| v > 1) {
        return Err(Error::ValueError("labels must be 0 or 1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    let zeros = y.len() - ones;
    if ones == 0 || zeros == 0 {
        return Err(Error::SingleClass);
    }
    Ok((zeros, ones))
}

fn check_matrix(x: &[Vec<f64>], y_len: usize) -> Result<usize> {
    if x.len() != y_len {
        return Err(Error::LengthMismatch(x.len(), y_len));
    }
    let d = x.first().map_or(0, Vec::len);
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: row.len() });
    }
    Ok(d)
}

/// L2-regularized logistic regression by full-batch gradient descent.
/// Returns the coefficients (no intercept).
pub fn logistic_coefficients(x: &[Vec<f64>], y: &[u8], iterations: usize, lr: f64, l2: f64) -> Vec<f64> {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &yi) in x.iter().zip(y) {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - yi as f64;
            gb += err;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += err * v;
            }
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= lr * (g / n + l2 * *wj);
        }
        b -= lr * gb / n;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeResult {
    /// Surviving feature indices, ascending.
    pub selected: Vec<usize>,
    /// Features in the order they were removed.
    pub eliminated: Vec<usize>,
}

/// Drops the feature with the smallest absolute standardized logistic
/// coefficient until `target_k` remain. Ties remove the lower index.
pub fn rfe_select(x: &[Vec<f64>], y: &[u8], target_k: usize) -> Result<RfeResult> {
    let d = check_matrix(x, y.len())?;
    if target_k == 0 || target_k > d {
        return Err(Error::BadK { k: target_k, n: d });
    }
    check_binary(y)?;
    let z: Vec<Vec<f64>> = {
        let s = Standardizer::fit(x);
        x.iter().map(|r| s.apply(r)).collect()
    };
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut eliminated = Vec::with_capacity(d - target_k);
    while remaining.len() > target_k {
        let sub: Vec<Vec<f64>> = z.iter().map(|r| remaining.iter().map(|&j| r[j]).collect()).collect();
        let w = logistic_coefficients(&sub, y, 200, 0.5, 1e-3);
        let (pos, _) = w
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        eliminated.push(remaining.remove(pos));
    }
    Ok(RfeResult { selected: remaining, eliminated })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteParams {
    pub ratio: f64,
    pub k: usize,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams { ratio: 1.0, k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    /// `(a, b, t)` for each synthetic row, appended after the originals in order.
    pub parents: Vec<(usize, usize, f64)>,
}

pub fn smote_oversample(x: &[Vec<f64>], y: &[u8], ratio: f64, k: usize, seed: u64) -> Result<SmoteOutput> {
    check_matrix(x, y.len())?;
    if !(ratio > 0.0) || k == 0 {
        return Err(Error::InvalidConfig(format!("SMOTE ratio {ratio} and k {k} must be positive")));
    }
    let (zeros, ones) = check_binary(y)?;
    let minority_label = u8::from(ones <= zeros);
    let (n_min, n_maj) = if minority_label == 1 { (ones, zeros) } else { (zeros, ones) };
    let target = (ratio * n_maj as f64).ceil() as usize;
    let deficit = target.saturating_sub(n_min);
    let mut out = SmoteOutput { x: x.to_vec(), y: y.to_vec(), parents: Vec::with_capacity(deficit) };
    if deficit == 0 {
        return Ok(out);
    }
    if n_min < k + 1 {
        return Err(Error::TooFewMinority { have: n_min, need: k + 1 });
    }
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let min_x: Vec<Vec<f64>> = minority.iter().map(|&i| x[i].clone()).collect();
    let neighbours: Vec<Vec<usize>> = (0..minority.len())
        .map(|a| nearest(&min_x, &min_x[a], k, 2.0, Some(a)).into_iter().map(|(_, j)| j).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..deficit {
        let a = rng.gen_range(0..minority.len());
        let b = neighbours[a][rng.gen_range(0..neighbours[a].len())];
        let t: f64 = rng.gen_range(0.0..=1.0);
        out.x.push(min_x[a].iter().zip(&min_x[b]).map(|(p, q)| p + t * (q - p)).collect());
        out.y.push(minority_label);
        out.parents.push((minority[a], minority[b], t));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChurnModel {
    pub input_width: usize,
    pub selected_features: Vec<usize>,
    pub normalization: Standardizer,
    pub mlp: MlpParams,
    pub report: TrainReport,
    pub eliminated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChurnTrainConfig {
    pub rfe_k: usize,
    pub smote: SmoteParams,
    pub hyper: TrainConfig,
    pub hidden: Vec<usize>,
}

impl Default for ChurnTrainConfig {
    fn default() -> Self {
        ChurnTrainConfig {
            rfe_k: 12,
            smote: SmoteParams::default(),
            hyper: TrainConfig { learning_rate: 0.005, epochs: 10, batch_size: 64, l2_penalty: 0.03, seed: 0 },
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

/// RFE, then normalization, then SMOTE, then MLP training.
pub fn train_churn(x: &[Vec<f64>], y: &[u8], cfg: &ChurnTrainConfig) -> Result<ChurnModel> {
    let width = check_matrix(x, y.len())?;
    check_binary(y)?;
    let rfe = rfe_select(x, y, cfg.rfe_k.min(width))?;
    let sub: Vec<Vec<f64>> = x.iter().map(|r| rfe.selected.iter().map(|&j| r[j]).collect()).collect();
    let normalization = Standardizer::fit(&sub);
    let z: Vec<Vec<f64>> = sub.iter().map(|r| normalization.apply(r)).collect();
    let balanced = smote_oversample(&z, y, cfg.smote.ratio, cfg.smote.k, cfg.hyper.seed ^ 0xc4a2)?;
    let ys: Vec<f64> = balanced.y.iter().map(|&v| v as f64).collect();
    let mut dims = vec![rfe.selected.len()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let (mut mlp, report) = train_mlp(&dims, &balanced.x, &ys, &cfg.hyper)?;
    // Undo the class-prior shift introduced by oversampling so the output is
    // calibrated to the original churn rate.
    let last = mlp.biases.len() - 1;
    mlp.biases[last][0] += log_odds(y.iter().map(|&v| v as f64)) - log_odds(ys.iter().copied());
    Ok(ChurnModel {
        input_width: width,
        selected_features: rfe.selected,
        normalization,
        mlp,
        report,
        eliminated: rfe.eliminated,
    })
}

fn log_odds(labels: impl Iterator<Item = f64>) -> f64 {
    let (mut ones, mut n) = (0.0, 0.0);
    for v in labels {
        ones += v;
        n += 1.0;
    }
    (ones / (n - ones)).ln()
}

pub fn predict_churn(model: &ChurnModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.input_width {
        return Err(Error::DimensionMismatch { expected: model.input_width, got: features.len() });
    }
    let sub: Vec<f64> = model.selected_features.iter().map(|&j| features[j]).collect();
    Ok(model.mlp.predict_proba(&model.normalization.apply(&sub)))
}

impl ChurnModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHURN_MAGIC)?;
        w.write_u16::<LittleEndian>(CHURN_VERSION)?;
        w.write_u32::<LittleEndian>(self.input_width as u32)?;
        w.write_u32::<LittleEndian>(self.selected_features.len() as u32)?;
        for &j in &self.selected_features {
            w.write_u32::<LittleEndian>(j as u32)?;
        }
        self.normalization.write_to(w)?;
        self.mlp.write_to(w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHURN_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected CHRN")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != CHURN_VERSION {
            return Err(Error::Format(format!("unsupported CHRN version {version}")));
        }
        let input_width = r.read_u32::<LittleEndian>()? as usize;
        let n_sel = r.read_u32::<LittleEndian>()? as usize;
        let selected_features =
            (0..n_sel).map(|_| r.read_u32::<LittleEndian>().map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let mut sorted = selected_features.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n_sel || selected_features.iter().any(|&j| j >= input_width) {
            return Err(Error::Format("selected feature indices not unique or out of range".into()));
        }
        let normalization = Standardizer::read_from(r, n_sel)?;
        let mlp = MlpParams::read_from(r)?;
        if mlp.input_dim() != n_sel {
            return Err(Error::Format("MLP input width disagrees with selection".into()));
        }
        let report = TrainReport { final_loss: f64::NAN, train_accuracy: f64::NAN };
        Ok(ChurnModel { input_width, selected_features, normalization, mlp, report, eliminated: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn noisy(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| (0..d).map(|_| g.sample(&mut rng)).collect()).collect()
    }

    /// Best training accuracy of a single-feature threshold rule.
    fn single_feature_accuracy(x: &[Vec<f64>], y: &[u8], j: usize) -> f64 {
        let n = x.len() as f64;
        x.iter()
            .map(|r| r[j])
            .map(|thr| {
                let hits = x.iter().zip(y).filter(|(r, &l)| (r[j] > thr) == (l == 1)).count() as f64 / n;
                hits.max(1.0 - hits)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn rfe_keeps_the_informative_feature() {
        let x = noisy(200, 5, 1);
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let best = (0..5).max_by(|&a, &b| single_feature_accuracy(&x, &y, a).total_cmp(&single_feature_accuracy(&x, &y, b))).unwrap();
        assert_eq!(best, 0);
        let r = rfe_select(&x, &y, 1).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.eliminated.len(), 4);
        assert_eq!(rfe_select(&x, &y, 1).unwrap(), r);
    }

    #[test]
    fn rfe_identity_and_errors() {
        let x = noisy(30, 4, 2);
        let y: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        assert_eq!(rfe_select(&x, &y, 4).unwrap().selected, vec![0, 1, 2, 3]);
        assert!(matches!(rfe_select(&x, &[0; 30], 2), Err(Error::SingleClass)));
        assert!(matches!(rfe_select(&x, &y, 5), Err(Error::BadK { .. })));
        assert!(matches!(rfe_select(&x, &y, 0), Err(Error::BadK { .. })));
    }

    #[test]
    fn smote_balanced_is_noop() {
        let x = noisy(20, 2, 3);
        let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let out = smote_oversample(&x, &y, 1.0, 3, 0).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.y, y);
    }

    #[test]
    fn smote_two_point_minority_lies_on_diagonal() {
        let mut x = noisy(10, 2, 4);
        x.push(vec![0.0, 0.0]);
        x.push(vec![1.0, 1.0]);
        let mut y = vec![0u8; 10];
        y.extend([1, 1]);
        let out = smote_oversample(&x, &y, 1.0, 1, 7).unwrap();
        assert_eq!(out.y.iter().filter(|&&v| v == 1).count(), 10);
        for p in &out.x[12..] {
            assert!((p[0] - p[1]).abs() < 1e-12 && (0.0..=1.0).contains(&p[0]));
        }
    }

    #[test]
    fn smote_exact_count_ratio() {
        let x = noisy(100, 3, 5);
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 10 == 0)).collect();
        let out = smote_oversample(&x, &y, 1.0, 3, 1).unwrap();
        let ones = out.y.iter().filter(|&&v| v == 1).count();
        assert_eq!(ones, 90);
        assert_eq!(out.y.len() - ones, 90);
        let half = smote_oversample(&x, &y, 0.5, 3, 1).unwrap();
        assert_eq!(half.y.iter().filter(|&&v| v == 1).count(), 45);
    }

    #[test]
    fn smote_too_few_minority() {
        let x = noisy(10, 2, 6);
        let y: Vec<u8> = (0..10).map(|i| u8::from(i < 2)).collect();
        assert!(matches!(smote_oversample(&x, &y, 1.0, 2, 0), Err(Error::TooFewMinority { have: 2, need: 3 })));
    }

    fn separable(n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let x = noisy(n, 2, 8);
        let y = x.iter().map(|r| u8::from(r[0] + 0.5 * r[1] > 0.3)).collect();
        (x, y)
    }

    fn cfg(k: usize) -> ChurnTrainConfig {
        ChurnTrainConfig {
            rfe_k: k,
            smote: SmoteParams { ratio: 1.0, k: 3 },
            hyper: TrainConfig { learning_rate: 0.01, epochs: 60, batch_size: 16, l2_penalty: 1e-4, seed: 2 },
            hidden: vec![8],
        }
    }

    #[test]
    fn separable_training_and_prediction() {
        let (x, y) = separable(200);
        // A linear rule separates the data exactly.
        assert!(x.iter().zip(&y).all(|(r, &l)| (r[0] + 0.5 * r[1] > 0.3) == (l == 1)));
        let model = train_churn(&x, &y, &cfg(2)).unwrap();
        assert!(model.report.train_accuracy >= 0.95, "{:?}", model.report);
        // Deep inside class 1: far along the normal of the separating line.
        assert!(predict_churn(&model, &[3.0, 1.5]).unwrap() > 0.9);
        for r in &x {
            let p = predict_churn(&model, r).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(matches!(predict_churn(&model, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn deterministic_bytes_and_round_trip() {
        let (x, y) = separable(80);
        let a = train_churn(&x, &y, &cfg(2)).unwrap();
        let b = train_churn(&x, &y, &cfg(2)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = ChurnModel::read_from(&mut &a.to_bytes()[..]).unwrap();
        assert_eq!(back.mlp, a.mlp);
        assert_eq!(back.selected_features, a.selected_features);
        assert!(matches!(train_churn(&x, &[1; 80], &cfg(2)), Err(Error::SingleClass)));
    }

    #[test]
    fn zero_network_gives_half() {
        let model = ChurnModel {
            input_width: 3,
            selected_features: vec![0, 2],
            normalization: Standardizer { mean: vec![0.0; 2], std: vec![1.0; 2] },
            mlp: MlpParams::zeros(&[2, 4, 1]).unwrap(),
            report: TrainReport { final_loss: 0.0, train_accuracy: 0.0 },
            eliminated: vec![1],
        };
        assert_eq!(predict_churn(&model, &[5.0, -1.0, 2.0]).unwrap(), 0.5);
    }
}
