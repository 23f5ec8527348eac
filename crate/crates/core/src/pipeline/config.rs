use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::channel::NbestConfig;
use crate::features::LmSelection;
use crate::lm::Direction;
use crate::lstm::LstmConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub n_best: usize,
    pub beam: usize,
    pub max_regions: Option<usize>,
    /// LM features for `run`; `ablate` takes its own condition list.
    pub lms: LmSelection,
    /// When false, `run` reports the NCM top candidate without reranking.
    pub rerank: bool,
    pub k_folds: usize,
    pub seed: u64,
    pub channel_alpha: f64,
    pub lstm: LstmSettings,
    pub reranker: RerankerSettings,
    /// Where reports, models and predictions are written.
    pub out_dir: Option<PathBuf>,
    /// Content-addressed store for trained models and n-best lists.
    pub cache_dir: Option<PathBuf>,
    /// Also write per-candidate feature dumps for dev and test.
    pub dump_features: bool,
    pub verbose: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: DataSource::default(),
            n_best: 25,
            beam: 100,
            max_regions: Some(3),
            lms: LmSelection {
                fwd_lstm: true,
                bwd_lstm: true,
                fwd_4g: false,
                bwd_4g: false,
            },
            rerank: true,
            k_folds: 20,
            seed: 1,
            channel_alpha: 0.1,
            lstm: LstmSettings::default(),
            reranker: RerankerSettings::default(),
            out_dir: None,
            cache_dir: None,
            dump_features: false,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Grammar sentences with disfluencies injected by the reference channel.
    Synthetic {
        utterances: usize,
        rate: f64,
        seed: u64,
        dev_fraction: f64,
        test_fraction: f64,
    },
    Files {
        train: PathBuf,
        dev: PathBuf,
        test: PathBuf,
        format: FileFormat,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            utterances: 5000,
            rate: 0.15,
            seed: 7,
            dev_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Tsv,
    Dps,
}

impl FileFormat {
    /// Guesses from the extension; anything but `.dps` is TSV.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("dps") => FileFormat::Dps,
            _ => FileFormat::Tsv,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstmPreset {
    /// 16 units, 3 epochs: for tests.
    Tiny,
    /// 64 units, 13 epochs.
    #[default]
    Desk,
    /// 200 units, 13 epochs.
    Large,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmSettings {
    pub preset: LstmPreset,
    pub epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub embed: Option<usize>,
}

impl LstmSettings {
    pub fn config(&self, direction: Direction, seed: u64) -> LstmConfig {
        let mut c = match self.preset {
            LstmPreset::Tiny => LstmConfig {
                hidden: 16,
                embed: 16,
                epochs: 3,
                ..LstmConfig::default()
            },
            LstmPreset::Desk => LstmConfig::desk(),
            LstmPreset::Large => LstmConfig::default(),
        };
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if let Some(h) = self.hidden {
            c.hidden = h;
        }
        if let Some(e) = self.embed {
            c.embed = e;
        }
        c.direction = direction;
        c.seed = seed;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankerSettings {
    /// L2 strengths tried on dev; ties go to the earlier entry.
    pub lambdas: Vec<f64>,
    pub iterations: usize,
}

impl Default for RerankerSettings {
    fn default() -> Self {
        RerankerSettings {
            lambdas: vec![1e-3, 1e-4, 1e-2],
            iterations: 200,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn nbest_config(&self) -> NbestConfig {
        NbestConfig {
            n: self.n_best,
            beam: self.beam,
            max_regions: self.max_regions,
        }
    }

    /// Checks everything that can be checked before any training.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.n_best == 0 {
            return bad("n_best must be at least 1".into());
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2".into());
        }
        if self.rerank && self.reranker.lambdas.is_empty() {
            return bad("reranker.lambdas is empty".into());
        }
        if self.reranker.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("reranker.lambdas must be finite and non-negative".into());
        }
        match &self.data {
            DataSource::Synthetic {
                utterances,
                rate,
                dev_fraction,
                test_fraction,
                ..
            } => {
                if !(0.0..=1.0).contains(rate) {
                    return bad(format!("disfluency rate {rate} outside [0, 1]"));
                }
                let held = dev_fraction + test_fraction;
                if *dev_fraction <= 0.0 || *test_fraction <= 0.0 || held >= 1.0 {
                    return bad("dev and test fractions must be positive and sum below 1".into());
                }
                let train = (*utterances as f64 * (1.0 - held)).floor() as usize;
                if train < self.k_folds {
                    return bad(format!("{train} training utterances for {} folds", self.k_folds));
                }
            }
            DataSource::Files { train, dev, test, .. } => {
                for p in [train, dev, test] {
                    if !p.is_file() {
                        return bad(format!("corpus file {} does not exist", p.display()));
                    }
                }
            }
        }
        Ok(())
    }
}
