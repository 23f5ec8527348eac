//! Reranker features: model scores for each candidate plus surface patterns
//! over the candidate's labeling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Analysis, CandidateList};
use crate::corpus::Label;

pub type FeatureVector = BTreeMap<String, f64>;

pub const LSTM_FWD: &str = "lstm_fwd";
pub const LSTM_BWD: &str = "lstm_bwd";
pub const NGRAM_FWD: &str = "ngram4_fwd";
pub const NGRAM_BWD: &str = "ngram4_bwd";
pub const NCM_TOTAL: &str = "ncm_total";
pub const NCM_LM: &str = "ncm_lm";
pub const NCM_RANK: &str = "ncm_rank";
pub const NCM_GAP: &str = "ncm_gap";
pub const N_EDITS: &str = "n_edits";
pub const LM_CHANNEL_EDITS: &str = "lm_channel_edits";
pub const CHANNEL: &str = "channel";

const MAX_COPY: usize = 3;
const MAX_GAP: usize = 3;
const MAX_EDGE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("missing {0} score")]
    MissingScore(&'static str),
    #[error("{tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("non-finite {0} score")]
    NonFinite(&'static str),
}

/// Which external language-model scores become features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LmSelection {
    pub fwd_lstm: bool,
    pub bwd_lstm: bool,
    pub fwd_4g: bool,
    pub bwd_4g: bool,
}

impl LmSelection {
    pub const NONE: LmSelection = LmSelection {
        fwd_lstm: false,
        bwd_lstm: false,
        fwd_4g: false,
        bwd_4g: false,
    };

    pub fn any(&self) -> bool {
        self.fwd_lstm || self.bwd_lstm || self.fwd_4g || self.bwd_4g
    }

    pub fn any_lstm(&self) -> bool {
        self.fwd_lstm || self.bwd_lstm
    }
}

/// External LM log-probabilities of one candidate's fluent string.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LmScores {
    pub lstm_fwd: Option<f64>,
    pub lstm_bwd: Option<f64>,
    pub ngram_fwd: Option<f64>,
    pub ngram_bwd: Option<f64>,
}

/// Features of candidate `rank` in `list`.
pub fn extract(
    list: &CandidateList,
    rank: usize,
    scores: &LmScores,
    selection: &LmSelection,
) -> Result<FeatureVector, FeatureError> {
    let cand = &list.candidates[rank];
    let top = list.candidates[0].ncm_total_logprob;
    let mut fv = FeatureVector::new();
    let wanted = [
        (selection.fwd_lstm, LSTM_FWD, scores.lstm_fwd),
        (selection.bwd_lstm, LSTM_BWD, scores.lstm_bwd),
        (selection.fwd_4g, NGRAM_FWD, scores.ngram_fwd),
        (selection.bwd_4g, NGRAM_BWD, scores.ngram_bwd),
    ];
    for (on, name, value) in wanted {
        if on {
            let v = value.ok_or(FeatureError::MissingScore(name))?;
            if !v.is_finite() {
                return Err(FeatureError::NonFinite(name));
            }
            fv.insert(name.into(), v);
        }
    }
    fv.extend(ncm_scores(cand, rank, top).map(|(k, v)| (k.to_string(), v)));
    let words = list.utterance.words();
    for name in surface_flags(&words, &cand.labels)? {
        fv.insert(name, 1.0);
    }
    Ok(fv)
}

fn ncm_scores(c: &Analysis, rank: usize, top_total: f64) -> [(&'static str, f64); 7] {
    let edits = c.n_edits as f64;
    [
        (NCM_TOTAL, c.ncm_total_logprob),
        (NCM_LM, c.ncm_lm_logprob),
        (NCM_RANK, rank as f64),
        (NCM_GAP, c.ncm_total_logprob - top_total),
        (N_EDITS, edits),
        (LM_CHANNEL_EDITS, c.ncm_lm_logprob + c.channel_logprob + edits),
        (CHANNEL, c.channel_logprob),
    ]
}

pub fn surface_flags<S: AsRef<str>>(tokens: &[S], labels: &[Label]) -> Result<BTreeSet<String>, FeatureError> {
    if tokens.len() != labels.len() {
        return Err(FeatureError::LengthMismatch {
            tokens: tokens.len(),
            labels: labels.len(),
        });
    }
    let mut out = copy_flags(tokens, labels);
    out.extend(words_flags(labels));
    out.extend(sentence_edge_flags(labels));
    Ok(out)
}

/// `CopyFlags_X_Y`: a length-X span whose tokens are all EDITED repeats
/// after a gap of Y tokens. FILLER tokens are skipped before matching.
pub fn copy_flags<S: AsRef<str>>(tokens: &[S], labels: &[Label]) -> BTreeSet<String> {
    let kept: Vec<(&str, Label)> = tokens
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Filler)
        .map(|(t, l)| (t.as_ref(), *l))
        .collect();
    let mut out = BTreeSet::new();
    for x in 1..=MAX_COPY {
        for y in 0..=MAX_GAP {
            let hit = (0..kept.len()).any(|i| {
                let j = i + x + y;
                j + x <= kept.len()
                    && kept[i..i + x].iter().all(|t| t.1 == Label::Edited)
                    && (0..x).all(|k| kept[i + k].0 == kept[j + k].0)
            });
            if hit {
                out.insert(format!("CopyFlags_{x}_{y}"));
            }
        }
    }
    out
}

/// `WordsFlags_L_n_R` for every 3-token window: `n` EDITED tokens inside,
/// `L`/`R` whether the token just outside on each side is EDITED.
pub fn words_flags(labels: &[Label]) -> BTreeSet<String> {
    let ed = |i: usize| labels[i] == Label::Edited;
    let mut out = BTreeSet::new();
    for i in 0..labels.len().saturating_sub(2) {
        let n = (i..i + 3).filter(|&k| ed(k)).count();
        let l = usize::from(i > 0 && ed(i - 1));
        let r = usize::from(i + 3 < labels.len() && ed(i + 3));
        out.insert(format!("WordsFlags_{l}_{n}_{r}"));
    }
    out
}

/// `SentenceEdgeFlags_{initial,final}_L` for EDITED runs at either end of the
/// utterance (FILLER tokens at the very edge are skipped), L clamped to 3.
pub fn sentence_edge_flags(labels: &[Label]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let run = |it: &mut dyn Iterator<Item = &Label>| {
        it.skip_while(|l| **l == Label::Filler)
            .take_while(|l| **l == Label::Edited)
            .count()
    };
    let initial = run(&mut labels.iter());
    let last = run(&mut labels.iter().rev());
    for (edge, len) in [("initial", initial), ("final", last)] {
        if len > 0 {
            out.insert(format!("SentenceEdgeFlags_{edge}_{}", len.min(MAX_EDGE)));
        }
    }
    out
}

/// Ordered feature names. Once frozen, unknown names are dropped on lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    names: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
    frozen: bool,
}

impl FeatureSpace {
    /// Frozen space over the sorted union of names in `vectors`.
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> FeatureSpace {
        let names: BTreeSet<&String> = vectors.into_iter().flat_map(|v| v.keys()).collect();
        FeatureSpace::frozen(names.into_iter().cloned().collect())
    }

    pub fn frozen(names: Vec<String>) -> FeatureSpace {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        FeatureSpace {
            names,
            index,
            frozen: true,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Adds names from `fv`; a no-op once frozen.
    pub fn observe(&mut self, fv: &FeatureVector) {
        if self.frozen {
            return;
        }
        for name in fv.keys() {
            if !self.index.contains_key(name) {
                self.index.insert(name.clone(), self.names.len());
                self.names.push(name.clone());
            }
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn dense(&self, fv: &FeatureVector) -> Vec<f64> {
        let mut out = vec![0.0; self.names.len()];
        for (name, v) in fv {
            if let Some(i) = self.index_of(name) {
                out[i] = *v;
            }
        }
        out
    }
}

/// One JSON object per candidate: `{id, candidate_index, features}`.
pub fn write_features_jsonl<W: Write>(mut w: W, rows: &[(String, Vec<FeatureVector>)]) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        candidate_index: usize,
        features: &'a FeatureVector,
    }
    for (id, cands) in rows {
        for (i, fv) in cands.iter().enumerate() {
            let row = Row {
                id,
                candidate_index: i,
                features: fv,
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use Label::{Edited as E, Filler as F, Fluent as O};

    fn names(set: &BTreeSet<String>, prefix: &str) -> Vec<String> {
        set.iter().filter(|n| n.starts_with(prefix)).cloned().collect()
    }

    #[test]
    fn copy_flag_examples() {
        let s = copy_flags(&["want", "to", "to", "go"], &[O, E, O, O]);
        assert!(s.contains("CopyFlags_1_0"));
        let s = copy_flags(&["a", "b", "c", "a", "b"], &[E, E, O, O, O]);
        assert!(s.contains("CopyFlags_2_1"));
        assert!(copy_flags(&["a", "b", "c", "a", "b"], &[O; 5]).is_empty());
    }

    #[test]
    fn copy_gap_skips_fillers() {
        let s = copy_flags(&["to", "uh", "um", "to"], &[E, F, F, O]);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["CopyFlags_1_0"]);
    }

    #[test]
    fn copy_flags_require_an_entirely_edited_first_copy() {
        let s = copy_flags(&["a", "b", "a", "b"], &[E, O, O, O]);
        assert!(s.contains("CopyFlags_1_1"));
        assert!(!s.contains("CopyFlags_2_0"));
    }

    #[test]
    fn words_flag_enumeration() {
        assert_eq!(
            words_flags(&[O, O, E, O, O]).into_iter().collect::<Vec<_>>(),
            ["WordsFlags_0_1_0"]
        );
        assert_eq!(
            words_flags(&[O, E, O, O, O]).into_iter().collect::<Vec<_>>(),
            ["WordsFlags_0_1_0", "WordsFlags_1_0_0"]
        );
        assert_eq!(
            words_flags(&[E, O, O, O, E]).into_iter().collect::<Vec<_>>(),
            ["WordsFlags_0_1_0", "WordsFlags_1_0_1"]
        );
        let fluent = words_flags(&[O, O, O, O, O, O]);
        assert_eq!(fluent.into_iter().collect::<Vec<_>>(), ["WordsFlags_0_0_0"]);
        assert!(words_flags(&[E, E]).is_empty());
        let one = words_flags(&[O, E, O]);
        assert_eq!(one.into_iter().collect::<Vec<_>>(), ["WordsFlags_0_1_0"]);
    }

    #[test]
    fn edge_flag_examples() {
        let s = sentence_edge_flags(&[E, E, O, O]);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["SentenceEdgeFlags_initial_2"]);
        let s = sentence_edge_flags(&[O, O, E]);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["SentenceEdgeFlags_final_1"]);
        let s = sentence_edge_flags(&[E, E, E, E, E, O]);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["SentenceEdgeFlags_initial_3"]);
        let s = sentence_edge_flags(&[F, E, O, E, F]);
        assert_eq!(names(&s, "Sentence").len(), 2);
        assert!(sentence_edge_flags(&[O, E, O]).is_empty());
    }

    fn list() -> CandidateList {
        let utt = Utterance::new("u", &["i", "i", "go"]);
        let cand = |labels: Vec<Label>, ch: f64, lm: f64| Analysis {
            utterance_id: "u".into(),
            n_edits: labels.iter().filter(|l| **l == E).count(),
            fluent: vec![],
            labels,
            repairs: vec![],
            channel_logprob: ch,
            ncm_lm_logprob: lm,
            ncm_total_logprob: ch + lm,
        };
        CandidateList {
            utterance: utt,
            candidates: vec![cand(vec![E, O, O], -2.0, -5.0), cand(vec![O, O, O], -0.5, -8.0)],
            n: 25,
        }
    }

    #[test]
    fn score_features() {
        let l = list();
        let sel = LmSelection {
            fwd_lstm: true,
            ..LmSelection::NONE
        };
        let sc = LmScores {
            lstm_fwd: Some(-12.5),
            ..Default::default()
        };
        let fv = extract(&l, 1, &sc, &sel).unwrap();
        assert_eq!(fv[LSTM_FWD], -12.5);
        assert_eq!(fv[LM_CHANNEL_EDITS], -8.0 + -0.5);
        assert_eq!(fv[NCM_RANK], 1.0);
        assert_eq!(fv[NCM_GAP], -8.5 - -7.0);
        assert!(!fv.contains_key(LSTM_BWD));
        let top = extract(&l, 0, &sc, &sel).unwrap();
        assert_eq!(top[LM_CHANNEL_EDITS], -5.0 + -2.0 + 1.0);
        assert_eq!(top["CopyFlags_1_0"], 1.0);

        let both = LmSelection {
            bwd_lstm: true,
            ..sel
        };
        assert_eq!(extract(&l, 0, &sc, &both), Err(FeatureError::MissingScore(LSTM_BWD)));
    }

    #[test]
    fn frozen_space_drops_unknown_names() {
        let mut a = FeatureVector::new();
        a.insert("x".into(), 2.0);
        a.insert("y".into(), 3.0);
        let space = FeatureSpace::from_vectors([&a]);
        let mut b = a.clone();
        b.insert("z".into(), 9.0);
        assert_eq!(space.dense(&b), [2.0, 3.0]);
        let mut open = FeatureSpace::default();
        open.observe(&b);
        open.freeze();
        open.observe(&[("w".to_string(), 1.0)].into_iter().collect());
        assert_eq!(open.names(), ["x", "y", "z"]);
    }
}
