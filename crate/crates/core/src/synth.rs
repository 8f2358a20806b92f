//! Synthetic multimodal cohorts.
//!
//! A latent three-level risk tier drives every modality. With `coupling = c`:
//!
//! * true FL is `0.5 + c * mu_fl[tier] + 0.12 * u`, clipped to `[0, 1]`, where `u`
//!   is a personal N(0,1) factor;
//! * the clip's emotion is negative with probability `(1 - c) * 0.5 + c * neg[tier]`;
//! * churn occurs with probability `(1 - c) * base + c * r[tier]`, where the
//!   tier rates `r` average to `base` under the tier prior;
//! * tabular features load on a noisy tier score, on the standardized true FL,
//!   on both, or on nothing.
//!
//! At `c = 0` FL, emotion and churn are mutually independent.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::{snap_to_pcm16, AudioClip};
use crate::data::{
    parse_customer_table, write_customer_table, CustomerRecord, CustomerTable, EmotionLabel, RiskLabel, SchemaSpec,
};
use crate::error::{Error, PathContext, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Tier prior (low, mid, high).
pub const TIER_PRIOR: [f64; 3] = [0.5, 0.3, 0.2];
const FL_SHIFT: [f64; 3] = [0.25, -0.15, -0.25];
const FL_NOISE: f64 = 0.12;
const NEGATIVE_RATE: [f64; 3] = [0.1, 0.6, 0.95];
/// Churn-rate offsets per tier, in units of `kappa`; zero mean under [`TIER_PRIOR`].
const CHURN_OFFSET: [f64; 3] = [-1.0, 0.0, 2.5];
const TIER_SCORE_NOISE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_customers: usize,
    pub n_features: usize,
    pub labeled_fl_fraction: f64,
    pub churn_base_rate: f64,
    pub coupling: f64,
    pub clip_duration_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_customers: 2000,
            n_features: 20,
            labeled_fl_fraction: 0.2,
            churn_base_rate: 0.2,
            coupling: 0.9,
            clip_duration_s: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_customers == 0 || self.n_features == 0 {
            return bad("n_customers and n_features must be positive".into());
        }
        if !(self.labeled_fl_fraction > 0.0 && self.labeled_fl_fraction <= 1.0) {
            return bad(format!("labeled_fl_fraction {} not in (0,1]", self.labeled_fl_fraction));
        }
        if !(self.churn_base_rate > 0.0 && self.churn_base_rate < 1.0) {
            return bad(format!("churn_base_rate {} not in (0,1)", self.churn_base_rate));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return bad(format!("coupling {} not in [0,1]", self.coupling));
        }
        if !(0.5..=10.0).contains(&self.clip_duration_s) {
            return bad(format!("clip_duration_s {} not in [0.5,10]", self.clip_duration_s));
        }
        Ok(())
    }

    /// Churn probability for each tier.
    pub fn churn_rates(&self) -> [f64; 3] {
        let p = self.churn_base_rate;
        let kappa = p.min(0.98 * (1.0 - p) / CHURN_OFFSET[2]);
        let mut out = [0.0; 3];
        for t in 0..3 {
            let tier_rate = p + kappa * CHURN_OFFSET[t];
            out[t] = (1.0 - self.coupling) * p + self.coupling * tier_rate;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub tier: RiskLabel,
    pub true_fl: f64,
    pub emotion: EmotionLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub table: CustomerTable,
    pub audio_clips: BTreeMap<String, AudioClip>,
    /// Indexed like `table.rows`.
    pub ground_truth: Vec<GroundTruth>,
}

fn customer_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_tier(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    if u < TIER_PRIOR[0] {
        0
    } else if u < TIER_PRIOR[0] + TIER_PRIOR[1] {
        1
    } else {
        2
    }
}

/// Per-feature loadings `(on tier score, on standardized FL)`.
fn feature_loadings(n_features: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    (0..n_features)
        .map(|j| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mag = rng.gen_range(0.5..1.0);
            match j % 5 {
                0 | 1 => (sign * mag, 0.0),
                2 => (0.0, sign * mag),
                3 => (0.5 * sign * mag, 0.5 * mag),
                _ => (0.0, 0.0),
            }
        })
        .collect()
}

pub fn generate_cohort(config: &SynthConfig) -> Result<SyntheticCohort> {
    config.validate()?;
    let n = config.n_customers;
    let c = config.coupling;
    let mut global = customer_rng(config.seed, u64::MAX);
    let loadings = feature_loadings(config.n_features, &mut global);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut global);
    let n_labeled = ((config.labeled_fl_fraction * n as f64).round() as usize).clamp(1, n);
    let mut labeled = vec![false; n];
    for &i in &order[..n_labeled] {
        labeled[i] = true;
    }
    let churn_rates = config.churn_rates();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut audio_clips = BTreeMap::new();
    for i in 0..n {
        let mut rng = customer_rng(config.seed, i as u64);
        let tier = sample_tier(&mut rng);
        let fl_factor: f64 = std_normal.sample(&mut rng);
        let true_fl = (0.5 + c * FL_SHIFT[tier] + FL_NOISE * fl_factor).clamp(0.0, 1.0);

        let p_negative = (1.0 - c) * 0.5 + c * NEGATIVE_RATE[tier];
        let negative = rng.gen::<f64>() < p_negative;
        let which: bool = rng.gen();
        let emotion = match (negative, which) {
            (false, false) => EmotionLabel::Happiness,
            (false, true) => EmotionLabel::Neutral,
            (true, false) => EmotionLabel::Sadness,
            (true, true) => EmotionLabel::Anger,
        };
        let churned = rng.gen::<f64>() < churn_rates[tier];

        let tier_score = tier as f64 - 1.0 + TIER_SCORE_NOISE * std_normal.sample(&mut rng);
        let features: Vec<f64> = loadings
            .iter()
            .map(|&(a, b)| a * tier_score + b * (true_fl - 0.5) / 0.25 + 0.8 * std_normal.sample(&mut rng))
            .collect();

        let id = format!("c{i:05}");
        let audio_ref = format!("audio/{id}.wav");
        let clip = synth_audio(emotion, config.clip_duration_s, rng.gen())?;
        audio_clips.insert(audio_ref.clone(), clip);
        rows.push(CustomerRecord {
            id,
            features,
            fl_label: labeled[i].then_some(true_fl),
            audio_ref: Some(audio_ref),
            churn_outcome: Some(u8::from(churned)),
        });
        truth.push(GroundTruth { tier: RiskLabel::from_index(tier).expect("tier < 3"), true_fl, emotion });
    }
    let table = CustomerTable::new(SchemaSpec::numbered(config.n_features), rows)?;
    Ok(SyntheticCohort { table, audio_clips, ground_truth: truth })
}

/// Parametric stand-in for an emotional utterance.
///
/// Positive labels produce steady harmonic stacks; negative labels produce
/// decaying noise bursts under a slow amplitude envelope.
pub fn synth_audio(emotion: EmotionLabel, duration_s: f64, seed: u64) -> Result<AudioClip> {
    if !(0.5..=10.0).contains(&duration_s) {
        return Err(Error::InvalidDuration(duration_s));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    let tau = std::f64::consts::TAU;
    let floor = Normal::new(0.0, 0.003).expect("finite");
    let mut s: Vec<f64> = (0..n).map(|_| floor.sample(&mut rng)).collect();

    match emotion {
        EmotionLabel::Happiness | EmotionLabel::Neutral => {
            let (f0_range, n_harm, amp) = match emotion {
                EmotionLabel::Happiness => (220.0..300.0, 6, 0.45),
                _ => (110.0..170.0, 4, 0.35),
            };
            let f0 = rng.gen_range(f0_range);
            let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..tau)).collect();
            let norm: f64 = (1..=n_harm).map(|h| 1.0 / h as f64).sum();
            for (i, v) in s.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let tone: f64 = (1..=n_harm)
                    .map(|h| (tau * f0 * h as f64 * t + phases[h - 1]).sin() / h as f64)
                    .sum();
                *v += amp * tone / norm;
            }
        }
        EmotionLabel::Sadness | EmotionLabel::Anger => {
            let (gap, decay_s, amp, env_hz) = match emotion {
                EmotionLabel::Anger => (0.15..0.30, 0.003, 0.8, rng.gen_range(2.0..4.0)),
                _ => (0.25..0.40, 0.008, 0.5, rng.gen_range(0.5..1.5)),
            };
            let env_phase = rng.gen_range(0.0..tau);
            let burst = Normal::new(0.0, 1.0).expect("unit normal");
            let mut onset = rng.gen_range(0.02..0.12);
            while onset < duration_s {
                let start = (onset * sr) as usize;
                let env = 0.6 + 0.4 * (tau * env_hz * onset + env_phase).sin();
                let len = ((6.0 * decay_s) * sr) as usize;
                for k in 0..len.min(n.saturating_sub(start)) {
                    let t = k as f64 / sr;
                    s[start + k] += amp * env * (-t / decay_s).exp() * burst.sample(&mut rng) * 0.5;
                }
                onset += rng.gen_range(gap.clone());
            }
        }
    }
    for v in s.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    snap_to_pcm16(&mut s);
    AudioClip::new(s, SAMPLE_RATE)
}

pub const TABLE_FILE: &str = "customers.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRUTH_FILE: &str = "ground_truth.csv";

/// One manifest row: which clip belongs to which customer and its emotion label.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio_path: String,
    pub emotion: EmotionLabel,
}

impl SyntheticCohort {
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.table
            .rows
            .iter()
            .zip(&self.ground_truth)
            .filter_map(|(r, g)| {
                r.audio_ref.as_ref().map(|a| ManifestEntry { id: r.id.clone(), audio_path: a.clone(), emotion: g.emotion })
            })
            .collect()
    }

    /// Writes `customers.csv`, `manifest.csv`, `ground_truth.csv` and one WAV per clip under `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        let table_path = dir.join(TABLE_FILE);
        std::fs::write(&table_path, write_customer_table(&self.table)?).at(&table_path)?;

        let mut m = csv_writer(&dir.join(MANIFEST_FILE))?;
        m.write_record(["id", "audio_path", "emotion"])?;
        for e in self.manifest() {
            m.write_record([e.id, e.audio_path, e.emotion.to_string()])?;
        }
        m.flush()?;

        let mut t = csv_writer(&dir.join(TRUTH_FILE))?;
        t.write_record(["id", "tier", "true_fl", "emotion"])?;
        for (r, g) in self.table.rows.iter().zip(&self.ground_truth) {
            t.write_record([r.id.clone(), g.tier.to_string(), g.true_fl.to_string(), g.emotion.to_string()])?;
        }
        t.flush()?;

        for (path, clip) in &self.audio_clips {
            let full = dir.join(path);
            if let Some(parent) = full.parent() {
                std::fs::create_dir_all(parent).at(parent)?;
            }
            clip.write_wav_file(&full)?;
        }
        Ok(())
    }

    /// Reads everything [`SyntheticCohort::write_to_dir`] wrote.
    pub fn read_from_dir(dir: &Path) -> Result<Self> {
        let table = read_table(dir)?;
        let audio_clips = read_audio(dir, &table)?;
        let ground_truth = read_ground_truth(dir, &table)?;
        Ok(SyntheticCohort { table, audio_clips, ground_truth })
    }
}

/// The customer table alone; the column schema comes from the file header.
pub fn read_table(dir: &Path) -> Result<CustomerTable> {
    let path = dir.join(TABLE_FILE);
    let raw = std::fs::read(&path).at(&path)?;
    let header: Vec<String> = {
        let mut r = csv::Reader::from_reader(&raw[..]);
        r.headers()?.iter().map(str::to_string).collect()
    };
    let schema = SchemaSpec::from_header(&header.iter().map(String::as_str).collect::<Vec<_>>());
    parse_customer_table(&raw, &schema)
}

/// Clips listed in the manifest; every `audio_ref` in `table` must resolve.
pub fn read_audio(dir: &Path, table: &CustomerTable) -> Result<BTreeMap<String, AudioClip>> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut audio_clips = BTreeMap::new();
    for e in &manifest {
        audio_clips.insert(e.audio_path.clone(), AudioClip::read_wav_file(&dir.join(&e.audio_path))?);
    }
    for r in &table.rows {
        if let Some(a) = &r.audio_ref {
            if !audio_clips.contains_key(a) {
                return Err(Error::MissingModality { id: r.id.clone(), what: format!("clip {a} not in manifest") });
            }
        }
    }
    Ok(audio_clips)
}

/// Ground truth ordered like `table.rows`.
pub fn read_ground_truth(dir: &Path, table: &CustomerTable) -> Result<Vec<GroundTruth>> {
    let mut truth_by_id = BTreeMap::new();
    let mut tr = csv_reader(&dir.join(TRUTH_FILE))?;
    for rec in tr.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::SchemaMismatch(format!("{TRUTH_FILE}: expected 4 columns, got {}", rec.len())));
        }
        let tier: RiskLabel = rec[1].parse()?;
        let true_fl: f64 = rec[2].parse().map_err(|_| Error::ValueError(format!("bad true_fl {:?}", &rec[2])))?;
        let emotion: EmotionLabel = rec[3].parse()?;
        truth_by_id.insert(rec[0].to_string(), GroundTruth { tier, true_fl, emotion });
    }
    table
        .rows
        .iter()
        .map(|r| truth_by_id.remove(&r.id).ok_or_else(|| Error::ValueError(format!("no ground truth for {}", r.id))))
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(std::fs::File::create(path).at(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::Reader::from_reader(std::fs::File::open(path).at(path)?))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.exists() {
        return Err(Error::MissingModality { id: "*".into(), what: format!("audio manifest {} not found", path.display()) });
    }
    let mut r = csv_reader(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ManifestEntry { id: rec[0].to_string(), audio_path: rec[1].to_string(), emotion: rec[2].parse()? })
        })
        .collect()
}
