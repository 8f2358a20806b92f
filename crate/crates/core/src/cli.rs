//! `churnfuse` command-line front end.
//!
//! Layout under `--out` (each directory can be moved with the config file):
//! `data/` holds the cohort, `models/` the trained models and `reports/` the
//! evaluation output.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::audio::{build_feature_map, AudioClip, FeatureMap};
use crate::churn::ChurnModel;
use crate::config::{ConfigFile, RunConfig};
use crate::data::CustomerTable;
use crate::error::{Error, PathContext, Result};
use crate::fl::{predict_fl, FlModel};
use crate::fusion::{fuse_scores, run_hybrid_fusion, run_late_fusion, AudioSource, Strategy, UnimodalModels};
use crate::metrics::evaluate;
use crate::pipeline::{
    compare, split_indices, train_churn_baseline, train_churn_hybrid, train_fl_model, train_ser_model, Split,
};
use crate::ser::EmotionModel;
use crate::synth::{self, generate_cohort, TABLE_FILE};

pub const FL_MODEL_FILE: &str = "fl.flkn";
pub const SER_MODEL_FILE: &str = "ser.serm";
pub const CHURN_MODEL_FILE: &str = "churn.chrn";
pub const HYBRID_MODEL_FILE: &str = "churn_hybrid.chrn";

#[derive(Debug, Parser)]
#[command(name = "churnfuse", version, about = "Multimodal churn-risk fusion experiments")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; every stage seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root directory for data, models and reports.
    #[arg(long, global = true, default_value = "churnfuse-out")]
    pub out: PathBuf,
    #[arg(long = "threshold-fl", global = true)]
    pub threshold_fl: Option<f64>,
    #[arg(long = "threshold-churn", global = true)]
    pub threshold_churn: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (table, clips, manifest, ground truth).
    Gen,
    /// Train one unimodal model on the training split.
    Train {
        #[arg(value_enum)]
        modality: Modality,
    },
    /// Run one fusion strategy on the held-out split and score it.
    Evaluate {
        #[arg(value_enum)]
        strategy: StrategyArg,
    },
    /// Full experiment for every seed in the config; mean ± std per strategy.
    Compare,
    /// Summarize the reports written by `evaluate` and `compare`.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Modality {
    Fl,
    Ser,
    Churn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    None,
    Late,
    Hybrid,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::None => Strategy::None,
            StrategyArg::Late => Strategy::Late,
            StrategyArg::Hybrid => Strategy::Hybrid,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut rc = RunConfig::from_file(&file, &cli.out)?;
    rc.override_with(cli.seed, cli.threshold_fl, cli.threshold_churn)?;
    Ok(rc)
}

/// Runs the parsed command and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String> {
    let rc = run_config(cli)?;
    match cli.command {
        Command::Gen => cmd_gen(&rc),
        Command::Train { modality } => cmd_train(&rc, modality),
        Command::Evaluate { strategy } => cmd_evaluate(&rc, strategy.into()),
        Command::Compare => cmd_compare(&rc),
        Command::Report => cmd_report(&rc),
    }
}

pub fn cmd_gen(rc: &RunConfig) -> Result<String> {
    let cfg = rc.seeded();
    let cohort = generate_cohort(&cfg.synth)?;
    cohort.write_to_dir(&rc.data_dir)?;
    let table_path = rc.data_dir.join(TABLE_FILE);
    let table_bytes = std::fs::read(&table_path).at(&table_path)?;
    let mut out = String::new();
    let _ = writeln!(out, "seed = {}", rc.seed);
    let _ = writeln!(out, "customers = {}", cohort.table.len());
    let _ = writeln!(out, "clips = {}", cohort.audio_clips.len());
    let _ = writeln!(out, "labeled_fl = {}", cohort.table.rows.iter().filter(|r| r.fl_label.is_some()).count());
    let _ = writeln!(out, "data_dir = {}", rc.data_dir.display());
    let _ = writeln!(out, "customers_sha256 = {}", sha256_hex(&table_bytes));
    Ok(out)
}

fn split_for(rc: &RunConfig, table: &CustomerTable) -> Split {
    split_indices(table.len(), rc.experiment.test_fraction, rc.seeded().split_seed())
}

/// Feature maps for the clips referenced by `table`.
fn maps_for(table: &CustomerTable, clips: &BTreeMap<String, AudioClip>, rc: &RunConfig) -> Result<HashMap<String, FeatureMap>> {
    let mut maps = HashMap::new();
    for r in &table.rows {
        let missing = |what: &str| Error::MissingModality { id: r.id.clone(), what: what.to_string() };
        let key = r.audio_ref.as_ref().ok_or_else(|| missing("no audio_ref"))?;
        if !maps.contains_key(key) {
            let clip = clips.get(key).ok_or_else(|| missing("audio clip not found"))?;
            maps.insert(key.clone(), build_feature_map(clip, &rc.experiment.features)?);
        }
    }
    Ok(maps)
}

fn write_report(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).at(&path)
}

fn write_model(dir: &Path, name: &str, bytes: &[u8]) -> Result<String> {
    std::fs::create_dir_all(dir).at(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).at(&path)?;
    Ok(sha256_hex(bytes))
}

fn read_model<T>(dir: &Path, name: &str, read: impl FnOnce(&mut &[u8]) -> Result<T>) -> Result<T> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path)
        .map_err(|e| Error::InvalidConfig(format!("model {} unavailable ({e}); run `train` first", path.display())))?;
    read(&mut &bytes[..])
}

pub fn cmd_train(rc: &RunConfig, modality: Modality) -> Result<String> {
    let cfg = rc.seeded();
    let table = synth::read_table(&rc.data_dir)?;
    let split = split_for(rc, &table);
    let train = table.subset(&split.train);
    let mut out = String::new();
    match modality {
        Modality::Fl => {
            let model = train_fl_model(&train, &cfg.smogn, &cfg.coreg)?;
            let labeled: Vec<_> = train.rows.iter().filter_map(|r| r.fl_label.map(|y| (&r.features, y))).collect();
            let mut se = 0.0;
            for (x, y) in &labeled {
                se += (predict_fl(&model, x)? - y).powi(2);
            }
            let hash = write_model(&rc.model_dir, FL_MODEL_FILE, &model.to_bytes())?;
            let _ = writeln!(out, "model = fl");
            let _ = writeln!(out, "labeled = {}", labeled.len());
            let _ = writeln!(out, "unlabeled = {}", train.len() - labeled.len());
            let _ = writeln!(out, "pseudo_labels = {}", model.transcript.len());
            let _ = writeln!(out, "train_rmse = {:.6}", (se / labeled.len() as f64).sqrt());
            let _ = writeln!(out, "sha256 = {hash}");
        }
        Modality::Ser => {
            let clips = synth::read_audio(&rc.data_dir, &table)?;
            let truth = synth::read_ground_truth(&rc.data_dir, &table)?;
            let emotions = table.rows.iter().zip(&truth).map(|(r, g)| (r.id.clone(), g.emotion.binary())).collect();
            let maps = maps_for(&train, &clips, rc)?;
            let model = train_ser_model(&train, &maps, &emotions, &cfg.ser, &cfg.ser_hidden)?;
            let hash = write_model(&rc.model_dir, SER_MODEL_FILE, &model.to_bytes())?;
            let _ = writeln!(out, "model = ser");
            let _ = writeln!(out, "examples = {}", train.len());
            let _ = writeln!(out, "final_loss = {:.6}", model.report.final_loss);
            let _ = writeln!(out, "train_accuracy = {:.6}", model.report.train_accuracy);
            let _ = writeln!(out, "sha256 = {hash}");
        }
        Modality::Churn => {
            let model = train_churn_baseline(&train, &cfg.churn)?;
            let hash = write_model(&rc.model_dir, CHURN_MODEL_FILE, &model.to_bytes())?;
            let _ = writeln!(out, "model = churn");
            write_churn_summary(&mut out, "", &model, &hash);
            // The hybrid variant needs both side models.
            let fl_path = rc.model_dir.join(FL_MODEL_FILE);
            let ser_path = rc.model_dir.join(SER_MODEL_FILE);
            if fl_path.exists() && ser_path.exists() {
                let fl = read_model(&rc.model_dir, FL_MODEL_FILE, |r| FlModel::read_from(r))?;
                let ser = read_model(&rc.model_dir, SER_MODEL_FILE, |r| EmotionModel::read_from(r))?;
                let clips = synth::read_audio(&rc.data_dir, &table)?;
                let maps = maps_for(&train, &clips, rc)?;
                let hybrid = train_churn_hybrid(&train, &maps, &fl, &ser, &cfg.churn)?;
                let hash = write_model(&rc.model_dir, HYBRID_MODEL_FILE, &hybrid.to_bytes())?;
                write_churn_summary(&mut out, "hybrid_", &hybrid, &hash);
            } else {
                let _ = writeln!(out, "hybrid = skipped (train fl and ser first)");
            }
        }
    }
    Ok(out)
}

fn write_churn_summary(out: &mut String, prefix: &str, model: &ChurnModel, hash: &str) {
    let sel: Vec<String> = model.selected_features.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "{prefix}selected_features = [{}]", sel.join(", "));
    let _ = writeln!(out, "{prefix}final_loss = {:.6}", model.report.final_loss);
    let _ = writeln!(out, "{prefix}train_accuracy = {:.6}", model.report.train_accuracy);
    let _ = writeln!(out, "{prefix}sha256 = {hash}");
}

pub fn cmd_evaluate(rc: &RunConfig, strategy: Strategy) -> Result<String> {
    let cfg = rc.seeded();
    let table = synth::read_table(&rc.data_dir)?;
    let split = split_for(rc, &table);
    let test = table.subset(&split.test);
    let truth_rows = synth::read_ground_truth(&rc.data_dir, &table)?;
    let truth = table.rows.iter().zip(&truth_rows).map(|(r, g)| (r.id.clone(), g.tier)).collect();
    let outcomes = test
        .rows
        .iter()
        .map(|r| r.churn_outcome.ok_or_else(|| Error::ValueError(format!("customer {} has no churn outcome", r.id))))
        .collect::<Result<Vec<_>>>()?;

    let churn_file = if strategy == Strategy::Hybrid { HYBRID_MODEL_FILE } else { CHURN_MODEL_FILE };
    let models = UnimodalModels {
        fl: read_model(&rc.model_dir, FL_MODEL_FILE, |r| FlModel::read_from(r))?,
        ser: read_model(&rc.model_dir, SER_MODEL_FILE, |r| EmotionModel::read_from(r))?,
        churn: read_model(&rc.model_dir, churn_file, |r| ChurnModel::read_from(r))?,
        features: cfg.features.clone(),
    };
    let clips = synth::read_audio(&rc.data_dir, &table)?;
    let maps = maps_for(&test, &clips, rc)?;
    let source = AudioSource::Maps(&maps);
    let assignments = match strategy {
        Strategy::Late => run_late_fusion(&test, &source, &models, &cfg.translation)?,
        Strategy::Hybrid => run_hybrid_fusion(&test, &source, &models, &cfg.translation)?,
        Strategy::None => {
            let late = run_late_fusion(&test, &source, &models, &cfg.translation)?;
            let ids: Vec<String> = late.entries.iter().map(|a| a.id.clone()).collect();
            let scores: Vec<_> = late.entries.iter().map(|a| a.scores).collect();
            fuse_scores(Strategy::None, &ids, &scores, &cfg.translation)?
        }
    };
    let report = evaluate(&assignments, &truth, &outcomes)?;
    let name = strategy.as_str();
    write_report(&rc.report_dir, &format!("assignments_{name}.csv"), &assignments.to_csv()?)?;
    let kv = report.to_kv();
    write_report(&rc.report_dir, &format!("metrics_{name}.txt"), kv.as_bytes())?;
    Ok(kv)
}

pub fn cmd_compare(rc: &RunConfig) -> Result<String> {
    let cmp = compare(&rc.experiment, &rc.seeds)?;
    write_report(&rc.report_dir, "compare.csv", &cmp.to_csv()?)?;
    let seeds: Vec<String> = rc.seeds.iter().map(u64::to_string).collect();
    let text = format!("seeds = [{}]\n{}", seeds.join(", "), cmp.to_table());
    write_report(&rc.report_dir, "compare.txt", text.as_bytes())?;
    Ok(text)
}

/// Reads `key = value` lines, ignoring anything else.
fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn cmd_report(rc: &RunConfig) -> Result<String> {
    let mut out = String::new();
    let mut found = false;
    let _ = writeln!(out, "{:<8} {:>8} {:>8} {:>9} {:>8}  low/mid/high", "strategy", "MAP", "MA-F1", "accuracy", "AUC");
    for s in Strategy::ALL {
        let path = rc.report_dir.join(format!("metrics_{}.txt", s.as_str()));
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        found = true;
        let kv = parse_kv(&text);
        let get = |k: &str| kv.get(k).map(String::as_str).unwrap_or("-");
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>9} {:>8}  {}/{}/{}",
            s.as_str(),
            get("map_x100"),
            get("macro_f1_x100"),
            get("accuracy"),
            get("auc"),
            get("count_low"),
            get("count_mid"),
            get("count_high")
        );
    }
    if let Ok(text) = std::fs::read_to_string(rc.report_dir.join("compare.txt")) {
        found = true;
        let _ = writeln!(out, "\nseed ensemble:\n{text}");
    }
    if !found {
        return Err(Error::InvalidConfig(format!(
            "no reports in {}; run `evaluate` or `compare` first",
            rc.report_dir.display()
        )));
    }
    Ok(out)
}
