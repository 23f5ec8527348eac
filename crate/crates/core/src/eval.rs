//! Token-level scoring of EDITED labels: precision, recall, f-score and the
//! error rate (words falsely labelled over gold EDITED words).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("utterance {index}: {predicted} predicted labels but {gold} gold labels")]
    LengthMismatch { index: usize, predicted: usize, gold: usize },
    #[error("{predicted} predicted utterances but {gold} gold utterances")]
    CountMismatch { predicted: usize, gold: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Counts {
    pub fn of(predicted: &[Label], gold: &[Label]) -> Counts {
        let mut c = Counts::default();
        for (p, g) in predicted.iter().zip(gold) {
            match (*p == Label::Edited, *g == Label::Edited) {
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_positives += 1,
                (false, true) => c.false_negatives += 1,
                (false, false) => {}
            }
        }
        c
    }

    pub fn add(&mut self, other: &Counts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }

    pub fn gold(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    pub fn predicted(&self) -> usize {
        self.true_positives + self.false_positives
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.gold())
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// `(FP + FN) / gold`; with no gold EDITED words this is 0 when nothing
    /// was mislabelled and infinite otherwise.
    pub fn error_rate(&self) -> f64 {
        let wrong = self.false_positives + self.false_negatives;
        match (wrong, self.gold()) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (w, g) => w as f64 / g as f64,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub counts: Counts,
    /// Infinite (serialized as null) for a false alarm on a fluent utterance.
    pub error_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub error_rate: f64,
    pub utterances: Vec<UtteranceScore>,
}

impl EvalReport {
    pub fn from_utterances(utterances: Vec<UtteranceScore>) -> EvalReport {
        let mut total = Counts::default();
        for u in &utterances {
            total.add(&u.counts);
        }
        EvalReport {
            true_positives: total.true_positives,
            false_positives: total.false_positives,
            false_negatives: total.false_negatives,
            precision: total.precision(),
            recall: total.recall(),
            f_score: total.f_score(),
            error_rate: total.error_rate(),
            utterances,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            true_positives: self.true_positives,
            false_positives: self.false_positives,
            false_negatives: self.false_negatives,
        }
    }

    /// Pooled report over both corpora.
    pub fn concat(&self, other: &EvalReport) -> EvalReport {
        let mut all = self.utterances.clone();
        all.extend(other.utterances.iter().cloned());
        EvalReport::from_utterances(all)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One summary line per report; values in percent.
    pub fn table(rows: &[(String, EvalReport)]) -> String {
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(9);
        let mut out = format!(
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>5}  {:>5}  {:>5}\n",
            "condition", "P", "R", "F", "Err", "TP", "FP", "FN"
        );
        for (name, r) in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}  {:>5}  {:>5}  {:>5}",
                name,
                100.0 * r.precision,
                100.0 * r.recall,
                100.0 * r.f_score,
                100.0 * r.error_rate,
                r.true_positives,
                r.false_positives,
                r.false_negatives
            );
        }
        out
    }
}

/// Scores predicted against gold labels, utterance by utterance.
pub fn score(ids: &[String], predicted: &[Vec<Label>], gold: &[Vec<Label>]) -> Result<EvalReport, EvalError> {
    if predicted.len() != gold.len() || ids.len() != gold.len() {
        return Err(EvalError::CountMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut utts = Vec::with_capacity(gold.len());
    for (index, ((id, p), g)) in ids.iter().zip(predicted).zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(EvalError::LengthMismatch {
                index,
                predicted: p.len(),
                gold: g.len(),
            });
        }
        let counts = Counts::of(p, g);
        utts.push(UtteranceScore {
            id: id.clone(),
            counts,
            error_rate: counts.error_rate(),
        });
    }
    Ok(EvalReport::from_utterances(utts))
}
