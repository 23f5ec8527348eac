//! The noisy channel P(Y|X): a first-order Markov alignment transducer that
//! generates each reparandum word from the aligned repair word, plus n-best
//! search over candidate analyses and an exhaustive reference search.
//!
//! An analysis is fully determined by its labeling. Each maximal run of
//! EDITED tokens is a reparandum; the FILLER run right after it is the
//! interregnum; the repair is aligned against the maximal FLUENT run that
//! follows. Filler-lexicon tokens are always FILLER.

mod align;
mod brute;
mod io;
mod model;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Utterance};

pub use align::{best_alignment, min_edit_alignment};
pub use brute::{brute_force_nbest, BRUTE_FORCE_MAX_TOKENS};
pub use io::{read_candidates_jsonl, write_candidates_jsonl, CandidateRecord, ScoredLabels};
pub use model::{train_channel, ChannelModel, ChannelParams, NO_REPAIR};
pub use search::{nbest, NbestConfig};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("training data contains no repairs")]
    NoRepairs,
    #[error("malformed analysis: {0}")]
    MalformedSpan(String),
    #[error("utterance has {0} tokens; exhaustive search supports at most {BRUTE_FORCE_MAX_TOKENS}")]
    TooLong(usize),
    #[error("invalid channel model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Copy,
    Substitute,
    Insert,
    Delete,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Copy, OpKind::Substitute, OpKind::Insert, OpKind::Delete];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the op consumes a reparandum word.
    pub fn takes_reparandum(self) -> bool {
        !matches!(self, OpKind::Delete)
    }

    /// Whether the op consumes a repair word.
    pub fn takes_repair(self) -> bool {
        !matches!(self, OpKind::Insert)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: OpKind,
    pub reparandum_word: Option<String>,
    pub repair_word: Option<String>,
}

impl AlignOp {
    pub fn new(kind: OpKind, reparandum: Option<&str>, repair: Option<&str>) -> AlignOp {
        AlignOp {
            kind,
            reparandum_word: reparandum.map(str::to_string),
            repair_word: repair.map(str::to_string),
        }
    }

    pub fn is_consistent(&self) -> bool {
        match (self.kind, &self.reparandum_word, &self.repair_word) {
            (OpKind::Copy, Some(r), Some(m)) => r == m,
            (OpKind::Substitute, Some(r), Some(m)) => r != m,
            (OpKind::Insert, Some(_), None) => true,
            (OpKind::Delete, None, Some(_)) => true,
            _ => false,
        }
    }
}

/// Half-open token range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRegion {
    pub reparandum: Span,
    pub interregnum: Span,
    pub repair: Span,
    pub alignment: Vec<AlignOp>,
}

/// One candidate disfluency analysis of an utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub utterance_id: String,
    pub labels: Vec<Label>,
    pub fluent: Vec<String>,
    pub repairs: Vec<RepairRegion>,
    pub channel_logprob: f64,
    pub ncm_lm_logprob: f64,
    pub ncm_total_logprob: f64,
    pub n_edits: usize,
}

impl Analysis {
    pub fn is_all_fluent(&self) -> bool {
        self.n_edits == 0
    }

    pub fn fluent_refs(&self) -> Vec<&str> {
        self.fluent.iter().map(String::as_str).collect()
    }
}

/// The n-best analyses of one utterance, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub utterance: Utterance,
    pub candidates: Vec<Analysis>,
    pub n: usize,
}

impl CandidateList {
    pub fn top(&self) -> Option<&Analysis> {
        self.candidates.first()
    }
}

/// Structural skeleton of one repair region before alignment: reparandum
/// `[start, reparandum_end)`, interregnum up to `repair_start`, and the
/// FLUENT run `[repair_start, avail_end)` the repair may be aligned against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionFrame {
    pub start: usize,
    pub reparandum_end: usize,
    pub repair_start: usize,
    pub avail_end: usize,
}

/// Derives region frames from a labeling: maximal EDITED runs, the FILLER run
/// after each, and the maximal FLUENT run after that.
pub fn region_frames(labels: &[Label]) -> Vec<RegionFrame> {
    let n = labels.len();
    let mut frames = Vec::new();
    let mut i = 0;
    while i < n {
        if labels[i] != Label::Edited {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && labels[i] == Label::Edited {
            i += 1;
        }
        let reparandum_end = i;
        let mut c = i;
        while c < n && labels[c] == Label::Filler {
            c += 1;
        }
        let mut e = c;
        while e < n && labels[e] == Label::Fluent {
            e += 1;
        }
        frames.push(RegionFrame {
            start,
            reparandum_end,
            repair_start: c,
            avail_end: e,
        });
        i = c;
    }
    frames
}

/// Labels with every filler-lexicon token marked FILLER and the rest FLUENT.
pub fn all_fluent_labels(filler_mask: &[bool]) -> Vec<Label> {
    filler_mask
        .iter()
        .map(|&f| if f { Label::Filler } else { Label::Fluent })
        .collect()
}

/// Ranking order for candidates: higher total first, then labels ascending.
pub(crate) fn candidate_order(a: &Analysis, b: &Analysis) -> std::cmp::Ordering {
    b.ncm_total_logprob
        .total_cmp(&a.ncm_total_logprob)
        .then_with(|| a.labels.cmp(&b.labels))
}

/// Truncates a ranked list to `n`, making sure the all-FLUENT analysis stays in.
pub(crate) fn finalize_candidates(
    mut ranked: Vec<Analysis>,
    all_fluent: Analysis,
    n: usize,
) -> Vec<Analysis> {
    ranked.sort_by(candidate_order);
    ranked.truncate(n);
    if !ranked.iter().any(|a| a.labels == all_fluent.labels) {
        if ranked.len() == n {
            ranked.pop();
        }
        ranked.push(all_fluent);
        ranked.sort_by(candidate_order);
    }
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn frames_follow_maximal_runs() {
        // to boston uh i mean to denver
        let labels = [Edited, Edited, Filler, Filler, Filler, Fluent, Fluent];
        assert_eq!(
            region_frames(&labels),
            vec![RegionFrame {
                start: 0,
                reparandum_end: 2,
                repair_start: 5,
                avail_end: 7
            }]
        );
        let labels = [Edited, Fluent, Edited, Filler, Edited];
        let frames = region_frames(&labels);
        assert_eq!(frames.len(), 3);
        assert_eq!((frames[0].repair_start, frames[0].avail_end), (1, 2));
        assert_eq!((frames[1].repair_start, frames[1].avail_end), (4, 4));
        assert_eq!((frames[2].start, frames[2].avail_end), (4, 5));
    }

    #[test]
    fn op_consistency() {
        assert!(AlignOp::new(OpKind::Copy, Some("to"), Some("to")).is_consistent());
        assert!(!AlignOp::new(OpKind::Copy, Some("to"), Some("at")).is_consistent());
        assert!(!AlignOp::new(OpKind::Substitute, Some("to"), Some("to")).is_consistent());
        assert!(AlignOp::new(OpKind::Insert, Some("to"), None).is_consistent());
        assert!(!AlignOp::new(OpKind::Delete, Some("to"), None).is_consistent());
    }
}
