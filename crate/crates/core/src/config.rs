//! Run configuration: a flat `key = value` file (TOML syntax, no tables)
//! layered over the built-in defaults. Every key is optional; unknown keys are
//! rejected so typos do not pass silently.
//!
//! ```text
//! seed = 7
//! seeds = [1, 2, 3, 4, 5]
//! n_customers = 2000
//! coupling = 0.9
//! threshold_fl = 0.5
//! churn_hidden = [32, 32]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, PathContext, Result};
use crate::fl::Relevance;
use crate::pipeline::ExperimentConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub data_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,

    pub n_customers: Option<usize>,
    pub n_features: Option<usize>,
    pub labeled_fl_fraction: Option<f64>,
    pub churn_base_rate: Option<f64>,
    pub coupling: Option<f64>,
    pub clip_duration_s: Option<f64>,
    pub test_fraction: Option<f64>,

    pub smogn_relevance: Option<String>,
    pub smogn_sigmoid_steepness: Option<f64>,
    pub smogn_relevance_threshold: Option<f64>,
    pub smogn_k_neighbors: Option<usize>,
    pub smogn_perturbation: Option<f64>,
    pub smogn_oversample_ratio: Option<f64>,

    pub coreg_k1: Option<usize>,
    pub coreg_k2: Option<usize>,
    pub coreg_p1: Option<f64>,
    pub coreg_p2: Option<f64>,
    pub coreg_max_iterations: Option<usize>,
    pub coreg_pool_size: Option<usize>,
    pub coreg_batch_per_iter: Option<usize>,

    pub ser_learning_rate: Option<f64>,
    pub ser_epochs: Option<usize>,
    pub ser_batch_size: Option<usize>,
    pub ser_l2_penalty: Option<f64>,
    pub ser_hidden: Option<Vec<usize>>,

    pub churn_learning_rate: Option<f64>,
    pub churn_epochs: Option<usize>,
    pub churn_batch_size: Option<usize>,
    pub churn_l2_penalty: Option<f64>,
    pub churn_hidden: Option<Vec<usize>>,
    pub churn_rfe_k: Option<usize>,
    pub smote_ratio: Option<f64>,
    pub smote_k: Option<usize>,

    pub threshold_fl: Option<f64>,
    pub threshold_churn: Option<f64>,

    pub frame_size: Option<usize>,
    pub hop_size: Option<usize>,
    pub n_mels: Option<usize>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub kernel_time: Option<usize>,
    pub kernel_freq: Option<usize>,
    pub standardize_features: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::parse(&text)
    }
}

/// Everything a command needs: the experiment settings, seeds and directories.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

impl RunConfig {
    /// Defaults rooted at `out`, overridden by `file`.
    pub fn from_file(file: &ConfigFile, out: &Path) -> Result<Self> {
        let mut e = ExperimentConfig::default();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = file.$src.clone() { e.$($dst).+ = v; })*
            };
        }
        set!(
            n_customers => synth.n_customers,
            n_features => synth.n_features,
            labeled_fl_fraction => synth.labeled_fl_fraction,
            churn_base_rate => synth.churn_base_rate,
            coupling => synth.coupling,
            clip_duration_s => synth.clip_duration_s,
            test_fraction => test_fraction,
            smogn_relevance_threshold => smogn.relevance_threshold,
            smogn_k_neighbors => smogn.k_neighbors,
            smogn_perturbation => smogn.gaussian_perturbation,
            smogn_oversample_ratio => smogn.oversample_ratio,
            coreg_k1 => coreg.k1,
            coreg_k2 => coreg.k2,
            coreg_p1 => coreg.p1,
            coreg_p2 => coreg.p2,
            coreg_max_iterations => coreg.max_iterations,
            coreg_pool_size => coreg.pool_size,
            coreg_batch_per_iter => coreg.batch_per_iter,
            ser_learning_rate => ser.learning_rate,
            ser_epochs => ser.epochs,
            ser_batch_size => ser.batch_size,
            ser_l2_penalty => ser.l2_penalty,
            ser_hidden => ser_hidden,
            churn_learning_rate => churn.hyper.learning_rate,
            churn_epochs => churn.hyper.epochs,
            churn_batch_size => churn.hyper.batch_size,
            churn_l2_penalty => churn.hyper.l2_penalty,
            churn_hidden => churn.hidden,
            churn_rfe_k => churn.rfe_k,
            smote_ratio => churn.smote.ratio,
            smote_k => churn.smote.k,
            threshold_fl => translation.fl_threshold,
            threshold_churn => translation.churn_threshold,
            frame_size => features.frame_size,
            hop_size => features.hop_size,
            n_mels => features.n_mels,
            f_min => features.f_min,
            f_max => features.f_max,
            kernel_time => features.kernel_time,
            kernel_freq => features.kernel_freq,
            standardize_features => features.standardize,
        );
        match (file.smogn_relevance.as_deref(), file.smogn_sigmoid_steepness) {
            (None | Some("median"), None) => {}
            (Some("sigmoid"), s) => e.smogn.relevance = Relevance::Sigmoid { steepness: s.unwrap_or(1.0) },
            (None | Some("median"), Some(_)) => {
                return Err(Error::InvalidConfig("smogn_sigmoid_steepness needs smogn_relevance = \"sigmoid\"".into()))
            }
            (Some(other), _) => {
                return Err(Error::InvalidConfig(format!("smogn_relevance {other:?}: expected \"median\" or \"sigmoid\"")))
            }
        }
        let seed = file.seed.unwrap_or(0);
        let seeds = file.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let rc = RunConfig {
            experiment: e,
            seed,
            seeds,
            data_dir: file.data_dir.clone().unwrap_or_else(|| out.join("data")),
            model_dir: file.model_dir.clone().unwrap_or_else(|| out.join("models")),
            report_dir: file.report_dir.clone().unwrap_or_else(|| out.join("reports")),
        };
        rc.validate()?;
        Ok(rc)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.clone().with_seed(self.seed).validate()
    }

    /// Experiment settings with every stage seed derived from `self.seed`.
    pub fn seeded(&self) -> ExperimentConfig {
        self.experiment.clone().with_seed(self.seed)
    }

    /// Applies command-line overrides; a single `--seed` also replaces the seed list.
    pub fn override_with(
        &mut self,
        seed: Option<u64>,
        threshold_fl: Option<f64>,
        threshold_churn: Option<f64>,
    ) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s;
            self.seeds = vec![s];
        }
        if let Some(t) = threshold_fl {
            self.experiment.translation.fl_threshold = t;
        }
        if let Some(t) = threshold_churn {
            self.experiment.translation.churn_threshold = t;
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let rc = RunConfig::from_file(&ConfigFile::parse("").unwrap(), Path::new("out")).unwrap();
        assert_eq!(rc.experiment, ExperimentConfig::default());
        assert_eq!(rc.seeds, DEFAULT_SEEDS);
        assert_eq!(rc.model_dir, Path::new("out/models"));
    }

    #[test]
    fn keys_override_defaults() {
        let text = "seed = 9\nn_customers = 300\nchurn_hidden = [8]\nthreshold_fl = 0.4\nsmogn_relevance = \"sigmoid\"\n";
        let rc = RunConfig::from_file(&ConfigFile::parse(text).unwrap(), Path::new(".")).unwrap();
        assert_eq!(rc.seed, 9);
        assert_eq!(rc.experiment.synth.n_customers, 300);
        assert_eq!(rc.experiment.churn.hidden, vec![8]);
        assert_eq!(rc.experiment.translation.fl_threshold, 0.4);
        assert_eq!(rc.experiment.smogn.relevance, Relevance::Sigmoid { steepness: 1.0 });
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(ConfigFile::parse("coupling = 0.5\ncuopling = 0.5\n"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let f = ConfigFile::parse("coupling = 1.5").unwrap();
        assert!(RunConfig::from_file(&f, Path::new(".")).is_err());
        let mut rc = RunConfig::from_file(&ConfigFile::default(), Path::new(".")).unwrap();
        assert!(rc.override_with(None, Some(1.0), None).is_err());
    }

    #[test]
    fn flag_seed_replaces_seed_list() {
        let mut rc = RunConfig::from_file(&ConfigFile::default(), Path::new(".")).unwrap();
        rc.override_with(Some(42), None, None).unwrap();
        assert_eq!((rc.seed, rc.seeds.clone()), (42, vec![42]));
    }
}
