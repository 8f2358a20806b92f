//! Binary positive/negative emotion classifier over flattened feature maps.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! "SERM" | version u16 | n_mels u32 | input_dim u32
//!        | mean f64 x input_dim | std f64 x input_dim | MLP block
//! ```
//!
//! The MLP block is `n_layers u32 | dims u32 x n_layers | weights | biases`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::audio::FeatureMap;
use crate::data::{EmotionLabel, EmotionPrediction};
use crate::error::{Error, Result};
use crate::mlp::{train_mlp, MlpParams, TrainConfig, TrainReport};
use crate::norm::Standardizer;

pub const SER_MAGIC: &[u8; 4] = b"SERM";
pub const SER_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionModel {
    pub mlp: MlpParams,
    pub n_mels: usize,
    pub normalization: Standardizer,
    pub report: TrainReport,
}

impl EmotionModel {
    pub fn input_dim(&self) -> usize {
        3 * self.n_mels
    }

    /// `[P(positive), P(negative)]`.
    pub fn class_probabilities(&self, map: &FeatureMap) -> Result<[f64; 2]> {
        let x = self.prepare(map)?;
        let p1 = self.mlp.predict_proba(&x);
        Ok([1.0 - p1, p1])
    }

    fn prepare(&self, map: &FeatureMap) -> Result<Vec<f64>> {
        let flat = map.flatten();
        if flat.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: flat.len() });
        }
        Ok(self.normalization.apply(&flat))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(SER_MAGIC)?;
        w.write_u16::<LittleEndian>(SER_VERSION)?;
        w.write_u32::<LittleEndian>(self.n_mels as u32)?;
        w.write_u32::<LittleEndian>(self.input_dim() as u32)?;
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
        if &magic != SER_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected SERM")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != SER_VERSION {
            return Err(Error::Format(format!("unsupported SERM version {version}")));
        }
        let n_mels = r.read_u32::<LittleEndian>()? as usize;
        let dim = r.read_u32::<LittleEndian>()? as usize;
        if dim != 3 * n_mels {
            return Err(Error::Format(format!("input_dim {dim} != 3 * n_mels {n_mels}")));
        }
        let normalization = Standardizer::read_from(r, dim)?;
        let mlp = MlpParams::read_from(r)?;
        if mlp.input_dim() != dim {
            return Err(Error::Format("MLP input width disagrees with header".into()));
        }
        let report = TrainReport { final_loss: f64::NAN, train_accuracy: f64::NAN };
        Ok(EmotionModel { mlp, n_mels, normalization, report })
    }
}

/// Hidden layer widths used when the caller does not choose.
pub const DEFAULT_HIDDEN: [usize; 1] = [16];

pub fn train_emotion(maps: &[FeatureMap], labels: &[u8], hyper: &TrainConfig) -> Result<EmotionModel> {
    train_emotion_with(maps, labels, hyper, &DEFAULT_HIDDEN)
}

pub fn train_emotion_with(
    maps: &[FeatureMap],
    labels: &[u8],
    hyper: &TrainConfig,
    hidden: &[usize],
) -> Result<EmotionModel> {
    if maps.len() != labels.len() {
        return Err(Error::LengthMismatch(maps.len(), labels.len()));
    }
    let n_mels = maps.first().ok_or_else(|| Error::DegenerateData("no examples".into()))?.n_mels;
    let xs: Vec<Vec<f64>> = maps.iter().map(FeatureMap::flatten).collect();
    if let Some(bad) = xs.iter().find(|x| x.len() != 3 * n_mels) {
        return Err(Error::ShapeMismatch { expected: 3 * n_mels, got: bad.len() });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::ValueError("emotion labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(Error::DegenerateData(format!(
            "need >= 2 examples per class, have {negatives} of class 0 and {positives} of class 1"
        )));
    }
    let normalization = Standardizer::fit(&xs);
    let xs: Vec<Vec<f64>> = xs.iter().map(|x| normalization.apply(x)).collect();
    let ys: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut dims = vec![3 * n_mels];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let (mlp, report) = train_mlp(&dims, &xs, &ys, hyper)?;
    Ok(EmotionModel { mlp, n_mels, normalization, report })
}

pub fn predict_emotion(model: &EmotionModel, map: &FeatureMap) -> Result<EmotionPrediction> {
    let probs = model.class_probabilities(map)?;
    let binary = u8::from(probs[1] >= 0.5);
    Ok(EmotionPrediction {
        label: EmotionLabel::representative(binary),
        binary,
        confidence: probs[binary as usize],
    })
}
