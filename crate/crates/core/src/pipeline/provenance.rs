//! Which language model scored which utterance, and a check that no
//! training utterance was scored by a model that saw it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusSplit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub lm: String,
    /// The training fold left out, or `None` for the all-train model.
    pub held_out_fold: Option<usize>,
    /// Utterances whose fluent strings the model was trained on.
    pub training_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub utterance: String,
    pub split: Split,
    pub lm: String,
    pub model: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub models: Vec<ModelRecord>,
    pub scores: Vec<ScoreRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub models: usize,
    pub train_scores: usize,
    pub held_out_scores: usize,
    pub lms: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldViolation {
    #[error("score for {utterance} names unknown model {model}")]
    UnknownModel { utterance: String, model: String },
    #[error("{utterance} was scored by {model}, which was trained on it")]
    SelfScored { utterance: String, model: String },
    #[error("{utterance} is in fold {fold} but was scored by {model}")]
    WrongFold { utterance: String, fold: usize, model: String },
    #[error("training utterance {utterance} has no {lm} score")]
    Unscored { utterance: String, lm: String },
    #[error("{utterance} is not in the {split:?} split")]
    NotInSplit { utterance: String, split: Split },
}

impl Provenance {
    /// Checks that every training utterance got exactly the scores of the
    /// model that held out its fold, that no model scored an utterance it
    /// was trained on, and that held-out utterances used all-train models.
    pub fn audit(&self, split: &CorpusSplit) -> Result<AuditSummary, FoldViolation> {
        let models: BTreeMap<&str, (&ModelRecord, BTreeSet<&str>)> = self
            .models
            .iter()
            .map(|m| (m.id.as_str(), (m, m.training_ids.iter().map(String::as_str).collect())))
            .collect();
        let mut scored: BTreeSet<(&str, &str)> = BTreeSet::new();
        let (mut train_scores, mut held_out_scores) = (0, 0);
        for s in &self.scores {
            let (model, seen) = models.get(s.model.as_str()).ok_or_else(|| FoldViolation::UnknownModel {
                utterance: s.utterance.clone(),
                model: s.model.clone(),
            })?;
            if seen.contains(s.utterance.as_str()) {
                return Err(FoldViolation::SelfScored {
                    utterance: s.utterance.clone(),
                    model: s.model.clone(),
                });
            }
            let member = match s.split {
                Split::Train => split.train.contains(&s.utterance),
                Split::Dev => split.dev.contains(&s.utterance),
                Split::Test => split.test.contains(&s.utterance),
            };
            if !member {
                return Err(FoldViolation::NotInSplit {
                    utterance: s.utterance.clone(),
                    split: s.split,
                });
            }
            if s.split == Split::Train {
                let fold = split.fold_of(&s.utterance).expect("training ids are in a fold");
                if model.held_out_fold != Some(fold) {
                    return Err(FoldViolation::WrongFold {
                        utterance: s.utterance.clone(),
                        fold,
                        model: s.model.clone(),
                    });
                }
                train_scores += 1;
                scored.insert((s.utterance.as_str(), s.lm.as_str()));
            } else {
                held_out_scores += 1;
            }
        }
        let lms: BTreeSet<&str> = self.models.iter().map(|m| m.lm.as_str()).collect();
        for lm in &lms {
            for id in &split.train {
                if !scored.contains(&(id.as_str(), *lm)) {
                    return Err(FoldViolation::Unscored {
                        utterance: id.clone(),
                        lm: lm.to_string(),
                    });
                }
            }
        }
        Ok(AuditSummary {
            models: self.models.len(),
            train_scores,
            held_out_scores,
            lms: lms.into_iter().map(String::from).collect(),
        })
    }
}
